#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "robmapf/grid_env.hpp"
#include "robmapf/policy_net.hpp"
#include "robmapf/rng.hpp"

namespace robmapf::cert {

double normal_cdf(double x);
double normal_pdf(double x);

// Inverse standard-normal CDF. Throws std::domain_error outside (0, 1).
double normal_quantile(double p);

// I_x(a, b), continued-fraction evaluation.
double regularized_incomplete_beta(double a, double b, double x);

// x with I_x(a, b) = q, by bisection.
double beta_quantile(double q, double a, double b);

// One-sided lower confidence bound on a binomial proportion at level alpha.
double clopper_pearson_lower(int successes, int trials, double alpha);

struct CertConfig {
  double sigma = 0.10;
  int n0 = 32;
  int n = 500;
  double alpha = 1e-3;
  int pool_size = 1500;
};

void validate(const CertConfig& cfg);

inline constexpr int kAbstain = -1;

struct Certificate {
  int state_id = 0;
  int action = kAbstain;
  int hits = 0;
  double lower_bound = 0.0;
  double radius = 0.0;
  bool abstained() const { return action == kAbstain; }
};

Certificate certify(const net::NetParams& params, const env::Observation& obs, const CertConfig& cfg, Rng& rng,
                    int state_id = 0);

// States visited by argmax rollouts of `params` on clean observations.
std::vector<env::Observation> sample_pool_states(const net::NetParams& params, const env::EnvConfig& env_cfg,
                                                 int pool_size, std::uint64_t seed);

struct RadiusPool {
  double mean_radius = 0.0;          // abstentions count as 0
  std::vector<double> radii;         // sorted ascending
  double abstain_fraction = 0.0;

  nlohmann::json to_json(const CertConfig& cfg) const;
};

RadiusPool radius_pool(const net::NetParams& params, const env::EnvConfig& env_cfg, int pool_size,
                       const CertConfig& cfg, std::uint64_t seed, int jobs = 1);

}  // namespace robmapf::cert
