#include "robmapf/config.hpp"

#include <span>

#include "robmapf/policy_net.hpp"

namespace robmapf::config {

using nlohmann::json;

namespace {

// Every key of `doc` must exist in `known`, recursively through objects.
void check_keys(const json& doc, const json& known, const std::string& path) {
  if (!doc.is_object()) throw ConfigError((path.empty() ? std::string("config") : path) + ": expected an object");
  for (const auto& [key, value] : doc.items()) {
    const std::string here = path.empty() ? key : path + "." + key;
    if (!known.contains(key)) throw ConfigError(here + ": unknown field");
    const json& ref = known.at(key);
    if (ref.is_object() && here != "storyboard.attack") check_keys(value, ref, here);
  }
}

void merge(json& base, const json& doc) {
  for (const auto& [key, value] : doc.items()) {
    if (value.is_object() && base.contains(key) && base[key].is_object())
      merge(base[key], value);
    else
      base[key] = value;
  }
}

template <class T>
void read(const json& block, const std::string& path, const char* key, T& out) {
  const std::string here = path + "." + key;
  try {
    const json& v = block.at(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(here + ": expected a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(here + ": expected an integer");
      if (std::is_unsigned_v<T> && !v.is_number_unsigned()) throw ConfigError(here + ": expected a non-negative integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(here + ": expected a number");
    }
    out = v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError(here + ": invalid value");
  }
}

template <class Fn>
void checked(const std::string& prefix, Fn&& fn) {
  try {
    fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    const std::string what = e.what();
    throw ConfigError(what.rfind(prefix, 0) == 0 ? what : prefix + ": " + what);
  }
}

}  // namespace

json to_json(const RunConfig& c) {
  json j;
  j["env"] = {{"L", c.env.side}, {"rho", c.env.density}, {"N", c.env.agents}, {"T", c.env.horizon},
              {"r", c.env.radius}};
  j["ppo"] = {{"lr", c.ppo.lr},
              {"gamma", c.ppo.gamma},
              {"gae_lambda", c.ppo.gae_lambda},
              {"value_coef", c.ppo.value_coef},
              {"entropy_coef", c.ppo.entropy_coef},
              {"clip", c.ppo.clip},
              {"epochs", c.ppo.epochs},
              {"minibatches", c.ppo.minibatches},
              {"episodes", c.ppo.episodes},
              {"max_grad_norm", c.ppo.max_grad_norm},
              {"normalize_advantages", c.ppo.normalize_advantages},
              {"baseline_iterations", c.baseline_iterations},
              {"baseline_select_every", c.baseline_select_every},
              {"baseline_select_episodes", c.baseline_select_episodes}};
  j["adv"] = {{"alpha_adv", c.adv.alpha_adv},
              {"eps_train", c.adv.eps_train},
              {"beta", c.adv.beta},
              {"eps_smooth", c.adv.eps_smooth},
              {"inner_steps", c.adv.inner_steps},
              {"kappa_max", c.adv.kappa_max},
              {"warmup_frac", c.adv.warmup_frac},
              {"ramp_frac", c.adv.ramp_frac},
              {"eval_period", c.adv.eval_period},
              {"eval_episodes", c.adv.eval_episodes},
              {"iterations", c.adv.iterations},
              {"train_pgd_steps", c.adv.train_pgd_steps}};
  j["macer"] = {{"lambda", c.macer.lambda},
                {"sigma", c.macer.sigma},
                {"margin", c.macer.margin},
                {"samples", c.macer.samples},
                {"entropy_coef", c.macer.entropy_coef},
                {"lr", c.macer.lr},
                {"env_steps", c.macer.env_steps},
                {"warmup_frac", c.macer.warmup_frac},
                {"alpha_adv", c.macer.alpha_adv},
                {"entropy_floor", c.macer.entropy_floor}};
  j["cert"] = {{"sigma", c.cert.sigma},
               {"n0", c.cert.n0},
               {"n", c.cert.n},
               {"alpha", c.cert.alpha},
               {"pool_size", c.cert.pool_size}};
  j["eval"] = {{"episodes", c.eval.episodes},
               {"seed_base", c.eval.seed_base},
               {"episode_stride", c.eval.episode_stride},
               {"cell_stride", c.eval.cell_stride},
               {"pgd_restarts", c.eval.pgd_restarts},
               {"bootstrap_resamples", c.eval.bootstrap_resamples},
               {"certify", c.eval.certify}};
  j["storyboard"] = {{"instance_seed", c.storyboard.instance_seed},
                     {"attack", attack::to_json(c.storyboard.attack)},
                     {"names", c.storyboard.names}};
  j["io"] = {{"baseline", c.io.baseline},
             {"init", c.io.init},
             {"checkpoints", c.io.checkpoints},
             {"reports", c.io.reports}};
  j["seed"] = c.seed;
  return j;
}

RunConfig from_json(const json& doc) {
  const RunConfig defaults;
  json full = to_json(defaults);
  check_keys(doc, full, "");
  merge(full, doc);

  RunConfig c;
  const json& e = full["env"];
  read(e, "env", "L", c.env.side);
  read(e, "env", "rho", c.env.density);
  read(e, "env", "N", c.env.agents);
  read(e, "env", "T", c.env.horizon);
  read(e, "env", "r", c.env.radius);

  const json& p = full["ppo"];
  read(p, "ppo", "lr", c.ppo.lr);
  read(p, "ppo", "gamma", c.ppo.gamma);
  read(p, "ppo", "gae_lambda", c.ppo.gae_lambda);
  read(p, "ppo", "value_coef", c.ppo.value_coef);
  read(p, "ppo", "entropy_coef", c.ppo.entropy_coef);
  read(p, "ppo", "clip", c.ppo.clip);
  read(p, "ppo", "epochs", c.ppo.epochs);
  read(p, "ppo", "minibatches", c.ppo.minibatches);
  read(p, "ppo", "episodes", c.ppo.episodes);
  read(p, "ppo", "max_grad_norm", c.ppo.max_grad_norm);
  read(p, "ppo", "normalize_advantages", c.ppo.normalize_advantages);
  read(p, "ppo", "baseline_iterations", c.baseline_iterations);
  read(p, "ppo", "baseline_select_every", c.baseline_select_every);
  read(p, "ppo", "baseline_select_episodes", c.baseline_select_episodes);

  const json& a = full["adv"];
  read(a, "adv", "alpha_adv", c.adv.alpha_adv);
  read(a, "adv", "eps_train", c.adv.eps_train);
  read(a, "adv", "beta", c.adv.beta);
  read(a, "adv", "eps_smooth", c.adv.eps_smooth);
  read(a, "adv", "inner_steps", c.adv.inner_steps);
  read(a, "adv", "kappa_max", c.adv.kappa_max);
  read(a, "adv", "warmup_frac", c.adv.warmup_frac);
  read(a, "adv", "ramp_frac", c.adv.ramp_frac);
  read(a, "adv", "eval_period", c.adv.eval_period);
  read(a, "adv", "eval_episodes", c.adv.eval_episodes);
  read(a, "adv", "iterations", c.adv.iterations);
  read(a, "adv", "train_pgd_steps", c.adv.train_pgd_steps);

  const json& m = full["macer"];
  read(m, "macer", "lambda", c.macer.lambda);
  read(m, "macer", "sigma", c.macer.sigma);
  read(m, "macer", "margin", c.macer.margin);
  read(m, "macer", "samples", c.macer.samples);
  read(m, "macer", "entropy_coef", c.macer.entropy_coef);
  read(m, "macer", "lr", c.macer.lr);
  read(m, "macer", "env_steps", c.macer.env_steps);
  read(m, "macer", "warmup_frac", c.macer.warmup_frac);
  read(m, "macer", "alpha_adv", c.macer.alpha_adv);
  read(m, "macer", "entropy_floor", c.macer.entropy_floor);

  const json& ce = full["cert"];
  read(ce, "cert", "sigma", c.cert.sigma);
  read(ce, "cert", "n0", c.cert.n0);
  read(ce, "cert", "n", c.cert.n);
  read(ce, "cert", "alpha", c.cert.alpha);
  read(ce, "cert", "pool_size", c.cert.pool_size);

  const json& ev = full["eval"];
  read(ev, "eval", "episodes", c.eval.episodes);
  read(ev, "eval", "seed_base", c.eval.seed_base);
  read(ev, "eval", "episode_stride", c.eval.episode_stride);
  read(ev, "eval", "cell_stride", c.eval.cell_stride);
  read(ev, "eval", "pgd_restarts", c.eval.pgd_restarts);
  read(ev, "eval", "bootstrap_resamples", c.eval.bootstrap_resamples);
  read(ev, "eval", "certify", c.eval.certify);

  const json& sb = full["storyboard"];
  read(sb, "storyboard", "instance_seed", c.storyboard.instance_seed);
  read(sb, "storyboard", "names", c.storyboard.names);
  checked("storyboard.attack", [&] { c.storyboard.attack = attack::attack_from_json(sb.at("attack")); });

  const json& io = full["io"];
  read(io, "io", "baseline", c.io.baseline);
  read(io, "io", "init", c.io.init);
  read(io, "io", "checkpoints", c.io.checkpoints);
  read(io, "io", "reports", c.io.reports);

  if (!full["seed"].is_number_unsigned()) throw ConfigError("seed: expected a non-negative integer");
  c.seed = full["seed"].get<std::uint64_t>();
  validate(c);
  return c;
}

void validate(const RunConfig& c) {
  checked("env", [&] { env::validate(c.env); });
  checked("ppo", [&] { ppo::validate(c.ppo); });
  if (c.baseline_iterations < 0) throw ConfigError("ppo.baseline_iterations: must be >= 0");
  if (c.baseline_select_every < 0) throw ConfigError("ppo.baseline_select_every: must be >= 0");
  if (c.baseline_select_episodes < 1) throw ConfigError("ppo.baseline_select_episodes: must be >= 1");
  checked("adv", [&] { robust::validate(c.adv); });
  checked("macer", [&] { robust::validate(c.macer); });
  checked("cert", [&] { cert::validate(c.cert); });
  if (c.eval.episodes < 1) throw ConfigError("eval.episodes: must be >= 1");
  if (c.eval.pgd_restarts < 1) throw ConfigError("eval.pgd_restarts: must be >= 1");
  if (c.eval.bootstrap_resamples < 1) throw ConfigError("eval.bootstrap_resamples: must be >= 1");
  checked("storyboard.attack", [&] { attack::validate(c.storyboard.attack); });
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set " + assignment + ": expected key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;

  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("--set " + assignment + ": empty key segment");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    json& next = (*node)[part];
    if (next.is_null()) next = json::object();
    if (!next.is_object()) throw ConfigError(key.substr(0, dot) + ": not an object");
    node = &next;
    start = dot + 1;
  }
}

std::string config_hash(const RunConfig& cfg) {
  json j = to_json(cfg);
  j.erase("io");
  const std::string text = j.dump();
  const auto* bytes = reinterpret_cast<const std::uint8_t*>(text.data());
  return net::hex64(net::fnv1a64(std::span<const std::uint8_t>(bytes, text.size())));
}

eval::EvalConfig eval_config(const RunConfig& cfg, int jobs) {
  eval::EvalConfig e;
  e.episodes = cfg.eval.episodes;
  e.seeds = {cfg.eval.seed_base, cfg.eval.episode_stride, cfg.eval.cell_stride};
  e.jobs = jobs;
  return e;
}

}  // namespace robmapf::config
