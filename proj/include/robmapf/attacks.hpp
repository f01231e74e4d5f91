#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "robmapf/policy_net.hpp"
#include "robmapf/rng.hpp"

namespace robmapf::attack {

enum class Kind { None, Fgsm, Pgd, Gaussian, SaltPepper, ChannelDropout };
// Which network supplies attack gradients.
enum class Source { Defender, FrozenBaseline };

const char* kind_name(Kind k);
Kind kind_from_name(const std::string& name);

struct AttackSpec {
  Kind kind = Kind::None;
  double eps = 0.0;   // FGSM / PGD budget
  int steps = 10;     // PGD
  int restarts = 1;   // PGD
  double sigma = 0.0; // Gaussian sensor noise
  double rate = 0.0;  // salt-and-pepper flip rate or channel drop rate
  Source source = Source::Defender;

  static AttackSpec none() { return {}; }
  static AttackSpec fgsm(double eps);
  static AttackSpec pgd(double eps, int steps = 10, int restarts = 1);
  static AttackSpec gaussian(double sigma);
  static AttackSpec salt_pepper(double rate);
  static AttackSpec channel_dropout(double rate);

  bool gradient_based() const { return kind == Kind::Fgsm || kind == Kind::Pgd; }
  // The single swept parameter of this attack family.
  double parameter() const;
  std::string label() const;
  bool operator==(const AttackSpec&) const = default;
};

class AttackError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void validate(const AttackSpec& spec);
nlohmann::json to_json(const AttackSpec& spec);
AttackSpec attack_from_json(const nlohmann::json& doc);

// Elementwise projection onto [max(0, o - eps), min(1, o + eps)].
net::ObsBatch clip_to_ball(const net::ObsBatch& clean, const net::ObsBatch& candidate, double eps);

// Argmax actions of `source` at each row.
std::vector<int> clean_actions(const net::NetParams& source, const net::ObsBatch& obs);

// Cross-entropy of the source policy at `obs` against `targets`, per row.
net::Vector attacker_loss(const net::NetParams& source, const net::ObsBatch& obs,
                          const std::vector<int>& targets);

net::ObsBatch fgsm(const net::NetParams& source, const net::ObsBatch& clean, double eps);

struct PgdOptions {
  bool random_start = true;  // false starts every restart at the clean input
};

net::ObsBatch pgd(const net::NetParams& source, const net::ObsBatch& clean, double eps, int steps,
                  int restarts, Rng& rng, PgdOptions options = {});

// Gradient-free perturbations; the result always lies in [0, 1].
net::ObsBatch sensor_noise(const net::ObsBatch& clean, Kind kind, double parameter, Rng& rng);

// Dispatches on spec.kind. `source` is only read by gradient attacks.
net::ObsBatch apply(const AttackSpec& spec, const net::NetParams& source, const net::ObsBatch& clean,
                    Rng& rng);

}  // namespace robmapf::attack
