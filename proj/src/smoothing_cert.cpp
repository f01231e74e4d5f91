#include "robmapf/smoothing_cert.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "robmapf/parallel.hpp"

namespace robmapf::cert {

namespace {

constexpr std::uint64_t kPoolEpisodeBase = 70000;
constexpr std::uint64_t kSubsampleKey = 0x706f6f6c;
constexpr std::uint64_t kCertKey = 0x63657274;
constexpr Eigen::Index kChunk = 512;

double beta_continued_fraction(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-15;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 10000; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < eps) break;
  }
  return h;
}

// Counts of argmax actions over `samples` Gaussian perturbations of `obs`.
std::array<int, env::kNumActions> noisy_counts(const net::NetParams& params, const env::Observation& obs, int samples,
                                               double sigma, Rng& rng) {
  std::array<int, env::kNumActions> counts{};
  int done = 0;
  while (done < samples) {
    const Eigen::Index rows = std::min<Eigen::Index>(kChunk, samples - done);
    net::ObsBatch x(rows, env::kObsSize);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (int i = 0; i < env::kObsSize; ++i)
        x(r, i) = static_cast<float>(obs[static_cast<std::size_t>(i)] + sigma * rng.normal());
    const net::PolicyBatch out = net::forward(params, x);
    for (Eigen::Index r = 0; r < rows; ++r) ++counts[static_cast<std::size_t>(out.argmax(r))];
    done += static_cast<int>(rows);
  }
  return counts;
}

}  // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("normal_quantile: p must lie in (0, 1)");
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double low = 0.02425;
  double x;
  if (p < low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Halley refinement against the exact CDF.
  const double e = normal_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

double regularized_incomplete_beta(double a, double b, double x) {
  if (a <= 0.0 || b <= 0.0) throw std::domain_error("regularized_incomplete_beta: a and b must be > 0");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double beta_quantile(double q, double a, double b) {
  double lo = 0.0, hi = 1.0;
  for (int i = 0; i < 200 && hi - lo > 1e-15; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (regularized_incomplete_beta(a, b, mid) < q)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

double clopper_pearson_lower(int successes, int trials, double alpha) {
  if (trials < 1 || successes < 0 || successes > trials)
    throw std::invalid_argument("clopper_pearson_lower: need 0 <= k <= n and n >= 1");
  if (successes == 0) return 0.0;
  if (successes == trials) return std::pow(alpha, 1.0 / trials);
  return beta_quantile(alpha, successes, trials - successes + 1);
}

void validate(const CertConfig& cfg) {
  if (!(cfg.sigma > 0.0)) throw std::invalid_argument("cert.sigma: must be > 0");
  if (cfg.n0 < 1) throw std::invalid_argument("cert.n0: must be >= 1");
  if (cfg.n < cfg.n0) throw std::invalid_argument("cert.n: must be >= n0");
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw std::invalid_argument("cert.alpha: must lie in (0, 1)");
  if (cfg.pool_size < 0) throw std::invalid_argument("cert.pool_size: must be >= 0");
}

Certificate certify(const net::NetParams& params, const env::Observation& obs, const CertConfig& cfg, Rng& rng,
                    int state_id) {
  validate(cfg);
  Certificate c;
  c.state_id = state_id;
  const auto select = noisy_counts(params, obs, cfg.n0, cfg.sigma, rng);
  const int candidate = static_cast<int>(std::max_element(select.begin(), select.end()) - select.begin());
  const auto estimate = noisy_counts(params, obs, cfg.n, cfg.sigma, rng);
  c.hits = estimate[static_cast<std::size_t>(candidate)];
  c.lower_bound = clopper_pearson_lower(c.hits, cfg.n, cfg.alpha);
  if (c.lower_bound > 0.5) {
    c.action = candidate;
    c.radius = cfg.sigma * normal_quantile(c.lower_bound);
  }
  return c;
}

std::vector<env::Observation> sample_pool_states(const net::NetParams& params, const env::EnvConfig& env_cfg,
                                                 int pool_size, std::uint64_t seed) {
  if (pool_size <= 0) throw std::invalid_argument("radius_pool: pool size must be >= 1");
  std::vector<env::Observation> states;
  const auto target = static_cast<std::size_t>(2 * pool_size);
  for (std::uint64_t e = 0; states.size() < target; ++e) {
    env::EpisodeState s = env::generate_instance(kPoolEpisodeBase + e, env_cfg);
    while (!s.terminal()) {
      std::vector<env::Observation> obs;
      std::vector<int> who;
      for (int i = 0; i < static_cast<int>(s.agents.size()); ++i) {
        if (s.agents[static_cast<std::size_t>(i)].reached) continue;
        obs.push_back(env::observe(s, i));
        who.push_back(i);
      }
      std::vector<env::Action> actions(s.agents.size(), env::Action::Wait);
      const net::PolicyBatch out = net::forward(params, net::to_batch(obs));
      for (std::size_t j = 0; j < who.size(); ++j)
        actions[static_cast<std::size_t>(who[j])] = static_cast<env::Action>(out.argmax(static_cast<Eigen::Index>(j)));
      states.insert(states.end(), obs.begin(), obs.end());
      env::step(s, actions);
    }
  }
  Rng pick(stream_seed(seed, kSubsampleKey));
  pick.shuffle(std::span<env::Observation>(states));
  states.resize(static_cast<std::size_t>(pool_size));
  return states;
}

nlohmann::json RadiusPool::to_json(const CertConfig& cfg) const {
  return {{"sigma", cfg.sigma}, {"n0", cfg.n0},           {"n", cfg.n},
          {"alpha", cfg.alpha}, {"pool_size", radii.size()}, {"mean_radius", mean_radius},
          {"radii", radii},     {"abstain_fraction", abstain_fraction}};
}

RadiusPool radius_pool(const net::NetParams& params, const env::EnvConfig& env_cfg, int pool_size,
                       const CertConfig& cfg, std::uint64_t seed, int jobs) {
  validate(cfg);
  const std::vector<env::Observation> states = sample_pool_states(params, env_cfg, pool_size, seed);
  std::vector<Certificate> certs(states.size());
  parallel_for(states.size(), jobs, [&](std::size_t i) {
    Rng rng(stream_seed(seed, kCertKey, i));
    certs[i] = certify(params, states[i], cfg, rng, static_cast<int>(i));
  });
  RadiusPool pool;
  double sum = 0.0;
  int abstains = 0;
  for (const auto& c : certs) {
    pool.radii.push_back(c.radius);
    sum += c.radius;
    if (c.abstained()) ++abstains;
  }
  std::sort(pool.radii.begin(), pool.radii.end());
  pool.mean_radius = sum / static_cast<double>(certs.size());
  pool.abstain_fraction = static_cast<double>(abstains) / static_cast<double>(certs.size());
  return pool;
}

}  // namespace robmapf::cert
