#include "robmapf/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace robmapf::attack {
namespace {

float sign(float g) { return g > 0.0f ? 1.0f : (g < 0.0f ? -1.0f : 0.0f); }

std::string fmt_param(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

const char* kind_name(Kind k) {
  switch (k) {
    case Kind::None: return "none";
    case Kind::Fgsm: return "fgsm";
    case Kind::Pgd: return "pgd";
    case Kind::Gaussian: return "gaussian";
    case Kind::SaltPepper: return "salt_pepper";
    case Kind::ChannelDropout: return "channel_dropout";
  }
  return "?";
}

Kind kind_from_name(const std::string& name) {
  for (Kind k : {Kind::None, Kind::Fgsm, Kind::Pgd, Kind::Gaussian, Kind::SaltPepper, Kind::ChannelDropout})
    if (name == kind_name(k)) return k;
  throw AttackError("unknown attack kind '" + name + "'");
}

AttackSpec AttackSpec::fgsm(double eps) {
  AttackSpec s;
  s.kind = Kind::Fgsm;
  s.eps = eps;
  return s;
}

AttackSpec AttackSpec::pgd(double eps, int steps, int restarts) {
  AttackSpec s;
  s.kind = Kind::Pgd;
  s.eps = eps;
  s.steps = steps;
  s.restarts = restarts;
  return s;
}

AttackSpec AttackSpec::gaussian(double sigma) {
  AttackSpec s;
  s.kind = Kind::Gaussian;
  s.sigma = sigma;
  return s;
}

AttackSpec AttackSpec::salt_pepper(double rate) {
  AttackSpec s;
  s.kind = Kind::SaltPepper;
  s.rate = rate;
  return s;
}

AttackSpec AttackSpec::channel_dropout(double rate) {
  AttackSpec s;
  s.kind = Kind::ChannelDropout;
  s.rate = rate;
  return s;
}

double AttackSpec::parameter() const {
  switch (kind) {
    case Kind::Fgsm:
    case Kind::Pgd: return eps;
    case Kind::Gaussian: return sigma;
    case Kind::SaltPepper:
    case Kind::ChannelDropout: return rate;
    case Kind::None: return 0.0;
  }
  return 0.0;
}

std::string AttackSpec::label() const {
  if (kind == Kind::None) return "clean";
  return std::string(kind_name(kind)) + "@" + fmt_param(parameter());
}

void validate(const AttackSpec& s) {
  if (!(s.eps >= 0.0 && s.eps <= 1.0)) throw AttackError("attack eps must be in [0, 1]");
  if (s.kind == Kind::Pgd && s.steps < 1) throw AttackError("PGD steps must be >= 1");
  if (s.restarts < 1) throw AttackError("attack restarts must be >= 1");
  if (!(s.sigma >= 0.0)) throw AttackError("attack sigma must be >= 0");
  if (!(s.rate >= 0.0 && s.rate <= 1.0)) throw AttackError("attack rate must be in [0, 1]");
}

nlohmann::json to_json(const AttackSpec& s) {
  return {{"kind", kind_name(s.kind)}, {"eps", s.eps},     {"steps", s.steps},
          {"restarts", s.restarts},    {"sigma", s.sigma}, {"rate", s.rate},
          {"source", s.source == Source::Defender ? "defender" : "baseline"}};
}

AttackSpec attack_from_json(const nlohmann::json& doc) {
  AttackSpec s;
  try {
    s.kind = kind_from_name(doc.at("kind").get<std::string>());
    s.eps = doc.value("eps", 0.0);
    s.steps = doc.value("steps", 10);
    s.restarts = doc.value("restarts", 1);
    s.sigma = doc.value("sigma", 0.0);
    s.rate = doc.value("rate", 0.0);
    const std::string source = doc.value("source", std::string("defender"));
    if (source == "defender") s.source = Source::Defender;
    else if (source == "baseline") s.source = Source::FrozenBaseline;
    else throw AttackError("unknown attack source '" + source + "'");
  } catch (const nlohmann::json::exception& e) {
    throw AttackError(std::string("malformed attack spec: ") + e.what());
  }
  validate(s);
  return s;
}

net::ObsBatch clip_to_ball(const net::ObsBatch& clean, const net::ObsBatch& candidate, double eps) {
  const float e = static_cast<float>(eps);
  net::ObsBatch out(clean.rows(), clean.cols());
  for (Eigen::Index i = 0; i < clean.size(); ++i) {
    const float o = clean.data()[i];
    const float lo = std::max(0.0f, o - e);
    const float hi = std::min(1.0f, o + e);
    out.data()[i] = std::clamp(candidate.data()[i], lo, hi);
  }
  return out;
}

std::vector<int> clean_actions(const net::NetParams& source, const net::ObsBatch& obs) {
  const net::PolicyBatch out = net::forward(source, obs);
  std::vector<int> a(static_cast<std::size_t>(out.size()));
  for (Eigen::Index b = 0; b < out.size(); ++b) a[static_cast<std::size_t>(b)] = out.argmax(b);
  return a;
}

net::Vector attacker_loss(const net::NetParams& source, const net::ObsBatch& obs,
                          const std::vector<int>& targets) {
  return net::evaluate_loss(net::forward(source, obs), net::InputLoss::cross_entropy(targets));
}

namespace {

// x <- clip(x + step * sign(grad)).
net::ObsBatch sign_step(const net::NetParams& source, const net::ObsBatch& clean, const net::ObsBatch& x,
                        const net::InputLoss& loss, double step, double eps) {
  const net::InputGradient g = net::input_gradient(source, x, loss);
  net::ObsBatch candidate = x;
  const float s = static_cast<float>(step);
  for (Eigen::Index i = 0; i < candidate.size(); ++i) candidate.data()[i] += s * sign(g.grad.data()[i]);
  return clip_to_ball(clean, candidate, eps);
}

}  // namespace

net::ObsBatch fgsm(const net::NetParams& source, const net::ObsBatch& clean, double eps) {
  if (eps <= 0.0 || clean.rows() == 0) return clean;
  const auto loss = net::InputLoss::cross_entropy(clean_actions(source, clean));
  return sign_step(source, clean, clean, loss, eps, eps);
}

net::ObsBatch pgd(const net::NetParams& source, const net::ObsBatch& clean, double eps, int steps,
                  int restarts, Rng& rng, PgdOptions options) {
  if (steps < 1) throw AttackError("PGD steps must be >= 1");
  if (restarts < 1) throw AttackError("PGD restarts must be >= 1");
  if (eps <= 0.0 || clean.rows() == 0) return clean;
  const std::vector<int> targets = clean_actions(source, clean);
  const auto loss = net::InputLoss::cross_entropy(targets);
  const double step = 2.0 * eps / steps;

  net::ObsBatch best = clean;
  net::Vector best_loss = net::Vector::Constant(clean.rows(), -std::numeric_limits<float>::infinity());
  for (int r = 0; r < restarts; ++r) {
    net::ObsBatch x = clean;
    if (options.random_start) {
      for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] += static_cast<float>(rng.uniform(-eps, eps));
      x = clip_to_ball(clean, x, eps);
    }
    for (int k = 0; k < steps; ++k) x = sign_step(source, clean, x, loss, step, eps);
    const net::Vector final_loss = attacker_loss(source, x, targets);
    for (Eigen::Index b = 0; b < x.rows(); ++b) {
      if (final_loss(b) > best_loss(b)) {
        best_loss(b) = final_loss(b);
        best.row(b) = x.row(b);
      }
    }
  }
  return best;
}

net::ObsBatch sensor_noise(const net::ObsBatch& clean, Kind kind, double parameter, Rng& rng) {
  if (parameter < 0.0) throw AttackError("sensor-noise parameter must be >= 0");
  net::ObsBatch out = clean;
  if (parameter == 0.0) return out;
  switch (kind) {
    case Kind::Gaussian:
      for (Eigen::Index i = 0; i < out.size(); ++i) {
        const double v = out.data()[i] + parameter * rng.normal();
        out.data()[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
      break;
    case Kind::SaltPepper:
      for (Eigen::Index i = 0; i < out.size(); ++i) {
        if (rng.bernoulli(parameter)) out.data()[i] = rng.bernoulli(0.5) ? 1.0f : 0.0f;
      }
      break;
    case Kind::ChannelDropout:
      for (Eigen::Index b = 0; b < out.rows(); ++b)
        for (int c = 0; c < env::kObsChannels; ++c)
          if (rng.bernoulli(parameter)) out.row(b).segment(c * env::kObsCells, env::kObsCells).setZero();
      break;
    default:
      throw AttackError("sensor_noise() called with a non-noise attack kind");
  }
  return out;
}

net::ObsBatch apply(const AttackSpec& spec, const net::NetParams& source, const net::ObsBatch& clean,
                    Rng& rng) {
  switch (spec.kind) {
    case Kind::None: return clean;
    case Kind::Fgsm: return fgsm(source, clean, spec.eps);
    case Kind::Pgd: return pgd(source, clean, spec.eps, spec.steps, spec.restarts, rng);
    case Kind::Gaussian: return sensor_noise(clean, spec.kind, spec.sigma, rng);
    case Kind::SaltPepper:
    case Kind::ChannelDropout: return sensor_noise(clean, spec.kind, spec.rate, rng);
  }
  return clean;
}

}  // namespace robmapf::attack
