#include "robmapf/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "robmapf/parallel.hpp"
#include "robmapf/policy_net.hpp"
#include "robmapf/robust_train.hpp"
#include "robmapf/smoothing_cert.hpp"

namespace robmapf::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  return json::parse(f);
}

net::NetParams load_input(const std::string& path, const char* field) {
  if (path.empty()) throw config::ConfigError(std::string(field) + ": checkpoint path required");
  if (!fs::exists(path)) throw std::runtime_error(std::string(field) + ": missing checkpoint " + path);
  return net::load_checkpoint(path);
}

// Appends one JSON line per iteration and flushes so partial logs survive.
class JsonlLog {
 public:
  explicit JsonlLog(const fs::path& path) : f_(path) {
    if (!f_) throw std::runtime_error("cannot write " + path.string());
  }
  void operator()(const ppo::IterationLog& entry) {
    f_ << entry.to_json().dump() << "\n";
    f_.flush();
  }

 private:
  std::ofstream f_;
};

json selector_json(const robust::AdvTrainResult& r) {
  json scores = json::array();
  for (const auto& s : r.scores) scores.push_back({{"iter", s.iter}, {"score", s.score}});
  return {{"best_iter", r.best_iter},
          {"best_score", r.best_score},
          {"scores", scores},
          {"entropy_collapsed", r.entropy_collapsed},
          {"env_steps", r.env_steps}};
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

json mean_std(const std::vector<double>& v) {
  const double m = mean_of(v);
  json j = {{"mean", m}, {"values", v}};
  if (v.size() < 2) {
    j["std"] = nullptr;
  } else {
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    j["std"] = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return j;
}

std::vector<double> cell_means(const eval::EvalReport& r) {
  std::vector<double> v;
  for (const auto& c : r.cells) v.push_back(c.mean);
  return v;
}

}  // namespace

const std::vector<std::string>& modes() {
  static const std::vector<std::string> m = {"train-baseline", "train-advppo", "finetune-macer", "eval-grid",
                                             "eval-pgd5",      "certify",      "storyboard",     "report",
                                             "compare"};
  return m;
}

eval::EvalReport load_report(const fs::path& path) {
  if (!fs::exists(path)) throw std::runtime_error("missing report " + path.string());
  return eval::EvalReport::from_json(read_json(path));
}

json summarize_reports(std::span<const eval::EvalReport> reports) {
  if (reports.empty()) throw config::ConfigError("io.reports: at least one report required");
  std::vector<double> clean, mean_adv, worst_adv, radius;
  bool all_radius = true;
  for (const auto& r : reports) {
    if (r.cells.size() != reports[0].cells.size()) throw std::runtime_error("report: reports use different grids");
    clean.push_back(r.clean.mean);
    mean_adv.push_back(r.mean_adv);
    worst_adv.push_back(r.worst_adv);
    if (r.mean_radius)
      radius.push_back(*r.mean_radius);
    else
      all_radius = false;
  }
  json j;
  j["runs"] = reports.size();
  j["clean"] = mean_std(clean);
  j["mean_adv"] = mean_std(mean_adv);
  j["worst_adv"] = mean_std(worst_adv);
  j["mean_radius"] = all_radius ? mean_std(radius) : json(nullptr);
  json cells = json::array();
  for (std::size_t c = 0; c < reports[0].cells.size(); ++c) {
    std::vector<double> v;
    for (const auto& r : reports) v.push_back(r.cells[c].mean);
    json cell = mean_std(v);
    cell["attack"] = reports[0].cells[c].spec.label();
    cells.push_back(cell);
  }
  j["cells"] = cells;
  return j;
}

eval::BootstrapResult compare_reports(const eval::EvalReport& a, const eval::EvalReport& b, int resamples,
                                      std::uint64_t seed) {
  if (a.cells.size() != b.cells.size()) throw std::runtime_error("compare: reports use different grids");
  for (std::size_t c = 0; c < a.cells.size(); ++c)
    if (!(a.cells[c].spec == b.cells[c].spec)) throw std::runtime_error("compare: reports use different grids");
  const std::vector<double> ma = cell_means(a), mb = cell_means(b);
  return eval::paired_bootstrap(ma, mb, resamples, seed);
}

json run_mode(const std::string& mode, const config::RunConfig& cfg, const fs::path& out, int jobs) {
  config::validate(cfg);
  if (jobs < 1) throw config::ConfigError("--jobs: must be >= 1");
  fs::create_directories(out);
  const auto started = std::chrono::steady_clock::now();
  const std::string cfg_hash = config::config_hash(cfg);
  json inputs = json::object();
  json outputs = json::object();
  json summary = json::object();

  const auto save = [&](const net::NetParams& p, const std::string& name) {
    net::save_checkpoint(p, out / name);
    outputs[name] = net::hex64(net::params_hash(p));
  };
  const auto input = [&](const std::string& path, const char* field) {
    net::NetParams p = load_input(path, field);
    inputs[path] = net::hex64(net::params_hash(p));
    return p;
  };
  const auto single_checkpoint = [&]() -> const std::string& {
    if (cfg.io.checkpoints.size() != 1) throw config::ConfigError("io.checkpoints: exactly one checkpoint required");
    return cfg.io.checkpoints[0];
  };

  if (mode == "train-baseline") {
    JsonlLog log(out / "train_log.jsonl");
    const auto r = robust::train_baseline(net::init_params(cfg.seed), cfg.env, cfg.ppo, cfg.baseline_iterations,
                                          cfg.seed, cfg.baseline_select_every, cfg.baseline_select_episodes, jobs,
                                          [&](const ppo::IterationLog& e) { log(e); });
    save(r.best, "baseline.ckpt");
    save(r.final_params, "baseline_final.ckpt");
    summary = selector_json(r);
    summary["final_clean_success"] = r.log.empty() ? 0.0 : r.log.back().clean_success;
    write_json(out / "selector.json", summary);
  } else if (mode == "train-advppo") {
    const net::NetParams base = input(cfg.io.baseline, "io.baseline");
    const net::NetParams init = cfg.io.init.empty() ? base : input(cfg.io.init, "io.init");
    JsonlLog log(out / "train_log.jsonl");
    robust::AdvRunOptions options;
    options.iterations = cfg.adv.iterations;
    options.jobs = jobs;
    const auto r = robust::train_advppo(init, base, cfg.env, cfg.adv, cfg.ppo, cfg.seed, options,
                                        [&](const ppo::IterationLog& e) { log(e); });
    save(r.best, "advppo.ckpt");
    save(r.final_params, "advppo_final.ckpt");
    summary = selector_json(r);
    write_json(out / "selector.json", summary);
  } else if (mode == "finetune-macer") {
    const net::NetParams base = input(cfg.io.baseline, "io.baseline");
    const net::NetParams start = input(cfg.io.init, "io.init");
    JsonlLog log(out / "train_log.jsonl");
    const auto r = robust::finetune_macer(start, base, cfg.env, cfg.macer, cfg.adv, cfg.ppo, cfg.seed, jobs,
                                          [&](const ppo::IterationLog& e) { log(e); });
    save(r.best, "macer.ckpt");
    save(r.final_params, "macer_final.ckpt");
    summary = selector_json(r);
    write_json(out / "selector.json", summary);
  } else if (mode == "eval-grid") {
    const std::string& path = single_checkpoint();
    const net::NetParams policy = input(path, "io.checkpoints");
    eval::EvalReport report = eval::run_grid(policy, cfg.env, config::eval_config(cfg, jobs));
    if (cfg.eval.certify)
      report.mean_radius = cert::radius_pool(policy, cfg.env, cfg.cert.pool_size, cfg.cert, cfg.seed, jobs).mean_radius;
    report.checkpoint_hash = net::hex64(net::params_hash(policy));
    report.config_hash = cfg_hash;
    const std::string text = report.to_json().dump(2) + "\n";
    write_text(out / "report.json", text);
    write_text(out / "report.csv", report.to_csv());
    const auto* bytes = reinterpret_cast<const std::uint8_t*>(text.data());
    outputs["report.json"] = net::hex64(net::fnv1a64(std::span<const std::uint8_t>(bytes, text.size())));
    summary = {{"clean", report.clean.mean}, {"mean_adv", report.mean_adv}, {"worst_adv", report.worst_adv}};
  } else if (mode == "eval-pgd5") {
    if (cfg.io.checkpoints.empty()) throw config::ConfigError("io.checkpoints: at least one checkpoint required");
    const eval::EvalConfig ec = config::eval_config(cfg, jobs);
    std::vector<double> eps;
    for (const auto& s : ec.grid)
      if (s.kind == attack::Kind::Pgd) eps.push_back(s.eps);
    json rows = json::array();
    for (const auto& path : cfg.io.checkpoints) {
      const net::NetParams policy = input(path, "io.checkpoints");
      json cells = json::array();
      for (const auto& r : eval::multi_restart_pgd(policy, eps, cfg.eval.pgd_restarts, cfg.env, ec)) {
        json c = r.to_json();
        c["single"] = r.restart_means.front();
        cells.push_back(c);
      }
      rows.push_back({{"checkpoint", path}, {"checkpoint_hash", net::hex64(net::params_hash(policy))}, {"cells", cells}});
    }
    summary = {{"restarts", cfg.eval.pgd_restarts}, {"policies", rows}};
    write_json(out / "pgd5.json", summary);
  } else if (mode == "certify") {
    const net::NetParams policy = input(single_checkpoint(), "io.checkpoints");
    const auto pool = cert::radius_pool(policy, cfg.env, cfg.cert.pool_size, cfg.cert, cfg.seed, jobs);
    json j = pool.to_json(cfg.cert);
    write_json(out / "cert.json", j);
    summary = {{"mean_radius", pool.mean_radius}, {"abstain_fraction", pool.abstain_fraction}};
  } else if (mode == "storyboard") {
    if (cfg.io.checkpoints.empty()) throw config::ConfigError("io.checkpoints: at least one checkpoint required");
    if (!cfg.storyboard.names.empty() && cfg.storyboard.names.size() != cfg.io.checkpoints.size())
      throw config::ConfigError("storyboard.names: one name per checkpoint required");
    std::vector<net::NetParams> params;
    for (const auto& path : cfg.io.checkpoints) params.push_back(input(path, "io.checkpoints"));
    std::vector<eval::NamedPolicy> named;
    for (std::size_t i = 0; i < params.size(); ++i) {
      const std::string name =
          cfg.storyboard.names.empty() ? fs::path(cfg.io.checkpoints[i]).stem().string() : cfg.storyboard.names[i];
      named.push_back({name, &params[i]});
    }
    const auto board = eval::storyboard_capture(named, cfg.env, cfg.storyboard.instance_seed, cfg.storyboard.attack);
    write_json(out / "storyboard.json", board.to_json());
    for (std::size_t t = 0; t < board.tracks.size(); ++t)
      write_text(out / ("storyboard_" + board.tracks[t].name + ".svg"), eval::storyboard_svg(board, t));
    json flips = json::object();
    for (const auto& t : board.tracks) flips[t.name] = {{"flips", t.flips}, {"success", t.success}};
    summary = flips;
  } else if (mode == "report") {
    std::vector<eval::EvalReport> reports;
    for (const auto& path : cfg.io.reports) reports.push_back(load_report(path));
    summary = summarize_reports(reports);
    write_json(out / "summary.json", summary);
    std::ostringstream csv;
    csv << "metric,mean,std\n";
    for (const char* key : {"clean", "mean_adv", "worst_adv"}) {
      const json& m = summary[key];
      csv << key << "," << m["mean"].get<double>() << "," << (m["std"].is_null() ? std::string() : m["std"].dump())
          << "\n";
    }
    write_text(out / "summary.csv", csv.str());
  } else if (mode == "compare") {
    if (cfg.io.reports.size() != 2) throw config::ConfigError("io.reports: compare needs exactly two reports");
    const eval::EvalReport a = load_report(cfg.io.reports[0]);
    const eval::EvalReport b = load_report(cfg.io.reports[1]);
    const auto r = compare_reports(a, b, cfg.eval.bootstrap_resamples, cfg.seed);
    summary = r.to_json();
    summary["a"] = cfg.io.reports[0];
    summary["b"] = cfg.io.reports[1];
    write_json(out / "compare.json", summary);
  } else {
    throw config::ConfigError("mode: unknown mode " + mode);
  }

  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  json manifest = {{"mode", mode},
                   {"tool_version", kToolVersion},
                   {"config_hash", cfg_hash},
                   {"config", config::to_json(cfg)},
                   {"seed", cfg.seed},
                   {"jobs", jobs},
                   {"inputs", inputs},
                   {"outputs", outputs},
                   {"summary", summary},
                   {"wall_time_s", wall}};
  write_json(out / "manifest.json", manifest);
  return manifest;
}

int main(int argc, char** argv) {
  CLI::App app{"Robust shared-policy MAPF: training, attacked evaluation and certification"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out = "runs/out";
  int jobs = default_jobs();
  bool print_config = false;

  for (const auto& m : modes()) {
    CLI::App* sub = app.add_subcommand(m, "run the " + m + " stage");
    sub->add_option("--config", config_path, "JSON config file");
    sub->add_option("--set", overrides, "override a field, e.g. --set adv.beta=0.5")->take_all();
    sub->add_option("--seed", seed, "run seed");
    sub->add_option("--out", out, "output directory");
    sub->add_option("--jobs", jobs, "worker threads");
    sub->add_flag("--print-config", print_config, "print the resolved config and exit");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  const std::string mode = app.get_subcommands().front()->get_name();

  config::RunConfig cfg;
  try {
    json doc = json::object();
    if (!config_path.empty()) {
      std::ifstream f(config_path);
      if (!f) throw config::ConfigError("--config: cannot read " + config_path);
      doc = json::parse(f, nullptr, false);
      if (doc.is_discarded()) throw config::ConfigError("--config: invalid JSON in " + config_path);
    }
    for (const auto& o : overrides) config::apply_override(doc, o);
    if (seed) doc["seed"] = *seed;
    cfg = config::from_json(doc);
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }

  if (print_config) {
    std::cout << config::to_json(cfg).dump(2) << "\n";
    return 0;
  }

  try {
    const json manifest = run_mode(mode, cfg, out, jobs);
    std::cout << manifest["summary"].dump() << "\n";
    return 0;
  } catch (const config::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace robmapf::cli
