#include "robmapf/eval_harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "robmapf/parallel.hpp"
#include "robmapf/rng.hpp"

namespace robmapf::eval {

using attack::AttackSpec;

std::vector<AttackSpec> default_grid() {
  std::vector<AttackSpec> g;
  for (double e : {0.05, 0.10, 0.15, 0.20, 0.30}) g.push_back(AttackSpec::fgsm(e));
  for (double e : {0.05, 0.10, 0.15, 0.20, 0.30}) g.push_back(AttackSpec::pgd(e, 10, 1));
  for (double s : {0.05, 0.10, 0.15, 0.20}) g.push_back(AttackSpec::gaussian(s));
  for (double r : {0.02, 0.05, 0.10, 0.15}) g.push_back(AttackSpec::salt_pepper(r));
  for (double r : {0.05, 0.10, 0.20}) g.push_back(AttackSpec::channel_dropout(r));
  return g;
}

double run_episode(const net::NetParams& policy, const net::NetParams& source, const AttackSpec& spec,
                   const env::EnvConfig& env_cfg, std::uint64_t env_seed, std::uint64_t attack_seed) {
  env::EpisodeState state = env::generate_instance(env_seed, env_cfg);
  Rng rng(stream_seed(attack_seed, 0x61747461636bULL));
  std::vector<int> active;
  std::vector<env::Observation> obs;
  std::vector<env::Action> actions(state.agents.size(), env::Action::Wait);
  while (!state.terminal()) {
    active.clear();
    obs.clear();
    for (int i = 0; i < state.num_agents(); ++i) {
      if (state.agents[static_cast<std::size_t>(i)].reached) continue;
      active.push_back(i);
      obs.push_back(env::observe(state, i));
    }
    const net::ObsBatch seen = attack::apply(spec, source, net::to_batch(obs), rng);
    const net::PolicyBatch out = net::forward(policy, seen);
    std::fill(actions.begin(), actions.end(), env::Action::Wait);
    for (std::size_t k = 0; k < active.size(); ++k)
      actions[static_cast<std::size_t>(active[k])] = static_cast<env::Action>(out.argmax(static_cast<Eigen::Index>(k)));
    env::step(state, actions);
  }
  return env::success_rate(state);
}

namespace {

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

nlohmann::json EvalCell::to_json() const {
  return {{"attack", attack::to_json(spec)}, {"label", spec.label()}, {"index", index},
          {"episodes", episode_success}, {"mean", mean}};
}

EvalCell EvalCell::from_json(const nlohmann::json& doc) {
  EvalCell c;
  c.spec = attack::attack_from_json(doc.at("attack"));
  c.index = doc.at("index").get<int>();
  c.episode_success = doc.at("episodes").get<std::vector<double>>();
  c.mean = mean_of(c.episode_success);
  return c;
}

EvalCell run_cell(const net::NetParams& policy, const AttackSpec& spec, int cell_index,
                  const env::EnvConfig& env_cfg, int episodes, const SeedPool& seeds, int jobs,
                  std::uint64_t restart) {
  EvalCell cell;
  cell.spec = spec;
  cell.index = cell_index;
  cell.episode_success.assign(static_cast<std::size_t>(std::max(0, episodes)), 0.0);
  parallel_for(cell.episode_success.size(), jobs, [&](std::size_t k) {
    const std::uint64_t s = seeds.episode_seed(static_cast<int>(k), cell_index);
    cell.episode_success[k] = run_episode(policy, policy, spec, env_cfg, s, s + kRestartSeedStride * restart);
  });
  cell.mean = mean_of(cell.episode_success);
  return cell;
}

void EvalReport::aggregate() {
  clean.mean = mean_of(clean.episode_success);
  if (cells.empty()) {
    mean_adv = worst_adv = 0.0;
    worst_index = -1;
    return;
  }
  double sum = 0.0;
  worst_adv = 2.0;
  for (auto& c : cells) {
    c.mean = mean_of(c.episode_success);
    sum += c.mean;
    if (c.mean < worst_adv) {
      worst_adv = c.mean;
      worst_index = c.index;
    }
  }
  mean_adv = sum / static_cast<double>(cells.size());
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["clean"] = clean.to_json();
  j["clean_success"] = clean.mean;
  auto& arr = j["cells"] = nlohmann::json::array();
  for (const auto& c : cells) arr.push_back(c.to_json());
  j["mean_adv"] = mean_adv;
  j["worst_adv"] = worst_adv;
  j["worst_index"] = worst_index;
  const auto it = std::find_if(cells.begin(), cells.end(), [&](const EvalCell& c) { return c.index == worst_index; });
  j["worst_label"] = it == cells.end() ? "" : it->spec.label();
  j["mean_radius"] = mean_radius ? nlohmann::json(*mean_radius) : nlohmann::json(nullptr);
  j["checkpoint_hash"] = checkpoint_hash;
  j["config_hash"] = config_hash;
  return j;
}

EvalReport EvalReport::from_json(const nlohmann::json& doc) {
  EvalReport r;
  try {
    r.clean = EvalCell::from_json(doc.at("clean"));
    for (const auto& c : doc.at("cells")) r.cells.push_back(EvalCell::from_json(c));
    if (doc.contains("mean_radius") && !doc["mean_radius"].is_null()) r.mean_radius = doc["mean_radius"].get<double>();
    r.checkpoint_hash = doc.value("checkpoint_hash", std::string());
    r.config_hash = doc.value("config_hash", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("malformed evaluation report: ") + e.what());
  }
  r.aggregate();
  return r;
}

std::string EvalReport::to_csv() const {
  std::ostringstream out;
  out << "attack,param,mean,episodes\n";
  auto row = [&](const EvalCell& c) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f,%.6f", c.spec.parameter(), c.mean);
    out << attack::kind_name(c.spec.kind) << ',' << buf << ",\"";
    for (std::size_t k = 0; k < c.episode_success.size(); ++k) {
      if (k) out << ';';
      std::snprintf(buf, sizeof buf, "%.4f", c.episode_success[k]);
      out << buf;
    }
    out << "\"\n";
  };
  row(clean);
  for (const auto& c : cells) row(c);
  return out.str();
}

EvalReport run_grid(const net::NetParams& policy, const env::EnvConfig& env_cfg, const EvalConfig& cfg) {
  EvalReport report;
  const std::size_t n_cells = cfg.grid.size() + 1;
  const std::size_t episodes = static_cast<std::size_t>(std::max(0, cfg.episodes));
  std::vector<EvalCell> cells(n_cells);
  for (std::size_t c = 0; c < n_cells; ++c) {
    const bool is_clean = c == cfg.grid.size();
    cells[c].spec = is_clean ? AttackSpec::none() : cfg.grid[c];
    cells[c].index = is_clean ? kCleanCellIndex : static_cast<int>(c);
    cells[c].episode_success.assign(episodes, 0.0);
  }
  // Flat (cell, episode) jobs; results land in fixed slots.
  parallel_for(n_cells * episodes, cfg.jobs, [&](std::size_t job) {
    EvalCell& cell = cells[job / episodes];
    const int k = static_cast<int>(job % episodes);
    const std::uint64_t s = cfg.seeds.episode_seed(k, cell.index);
    cell.episode_success[static_cast<std::size_t>(k)] = run_episode(policy, policy, cell.spec, env_cfg, s, s);
  });
  report.clean = std::move(cells.back());
  cells.pop_back();
  report.cells = std::move(cells);
  report.aggregate();
  report.checkpoint_hash = net::hex64(net::params_hash(policy));
  return report;
}

nlohmann::json RestartResult::to_json() const {
  return {{"eps", eps}, {"cell_index", cell_index}, {"restart_means", restart_means}, {"worst", worst}};
}

std::vector<RestartResult> multi_restart_pgd(const net::NetParams& policy, std::span<const double> eps_list,
                                             int restarts, const env::EnvConfig& env_cfg, const EvalConfig& cfg) {
  if (restarts < 1) throw std::invalid_argument("multi_restart_pgd: restarts must be >= 1");
  std::vector<RestartResult> out;
  for (double eps : eps_list) {
    int cell = -1;
    for (std::size_t c = 0; c < cfg.grid.size(); ++c)
      if (cfg.grid[c].kind == attack::Kind::Pgd && std::abs(cfg.grid[c].eps - eps) < 1e-12) cell = static_cast<int>(c);
    if (cell < 0) throw std::invalid_argument("multi_restart_pgd: no PGD cell at the requested budget");
    RestartResult r;
    r.eps = eps;
    r.cell_index = cell;
    for (int k = 0; k < restarts; ++k) {
      const EvalCell c = run_cell(policy, cfg.grid[static_cast<std::size_t>(cell)], cell, env_cfg, cfg.episodes,
                                  cfg.seeds, cfg.jobs, static_cast<std::uint64_t>(k));
      r.restart_means.push_back(c.mean);
    }
    r.worst = *std::min_element(r.restart_means.begin(), r.restart_means.end());
    out.push_back(std::move(r));
  }
  return out;
}

nlohmann::json BootstrapResult::to_json() const { return {{"gap", gap}, {"ci_low", lo}, {"ci_high", hi}}; }

namespace {

// Linear-interpolated percentile of sorted data.
double percentile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

BootstrapResult paired_bootstrap(std::span<const double> a, std::span<const double> b, int resamples,
                                 std::uint64_t seed) {
  if (a.size() != b.size()) throw std::invalid_argument("paired_bootstrap: length mismatch");
  if (a.empty() || resamples < 1) throw std::invalid_argument("paired_bootstrap: empty input");
  const std::size_t n = a.size();
  std::vector<double> diff(n);
  for (std::size_t i = 0; i < n; ++i) diff[i] = a[i] - b[i];
  BootstrapResult r;
  r.gap = mean_of(diff);
  Rng rng(stream_seed(seed, 0x626f6f74));
  std::vector<double> gaps(static_cast<std::size_t>(resamples));
  for (auto& g : gaps) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += diff[rng.below(n)];
    g = s / static_cast<double>(n);
  }
  std::sort(gaps.begin(), gaps.end());
  r.lo = percentile(gaps, 0.025);
  r.hi = percentile(gaps, 0.975);
  return r;
}

nlohmann::json Storyboard::to_json() const {
  nlohmann::json j;
  j["instance"] = instance;
  j["attack"] = attack::to_json(spec);
  auto& tr = j["policies"] = nlohmann::json::array();
  for (const auto& t : tracks) {
    nlohmann::json tj;
    tj["name"] = t.name;
    tj["flips"] = t.flips;
    tj["success"] = t.success;
    auto& steps = tj["steps"] = nlohmann::json::array();
    for (std::size_t s = 0; s < t.steps.size(); ++s) {
      nlohmann::json sj;
      sj["t"] = s;
      auto& agents = sj["agents"] = nlohmann::json::array();
      for (const auto& a : t.steps[s]) {
        agents.push_back({{"pos", {a.pos.row, a.pos.col}},
                          {"reached", a.reached},
                          {"clean_action", a.clean_action ? nlohmann::json(env::action_name(static_cast<env::Action>(*a.clean_action))) : nlohmann::json(nullptr)},
                          {"attacked_action", a.attacked_action ? nlohmann::json(env::action_name(static_cast<env::Action>(*a.attacked_action))) : nlohmann::json(nullptr)},
                          {"flip", a.flip}});
      }
      steps.push_back(std::move(sj));
    }
    tr.push_back(std::move(tj));
  }
  return j;
}

Storyboard storyboard_capture(std::span<const NamedPolicy> policies, const env::EnvConfig& env_cfg,
                              std::uint64_t instance_seed, const AttackSpec& spec) {
  Storyboard board;
  board.spec = spec;
  const env::EpisodeState start = env::generate_instance(instance_seed, env_cfg);
  board.instance = env::instance_to_json(start);
  for (const NamedPolicy& p : policies) {
    StoryboardTrack track;
    track.name = p.name;
    env::EpisodeState state = start;
    Rng rng(stream_seed(instance_seed, 0x61747461636bULL));
    auto snapshot = [&] {
      std::vector<StoryboardAgentStep> row;
      for (const auto& a : state.agents) row.push_back({a.pos, a.reached, std::nullopt, std::nullopt, false});
      return row;
    };
    std::vector<StoryboardAgentStep> current = snapshot();
    while (!state.terminal()) {
      std::vector<int> active;
      std::vector<env::Observation> obs;
      for (int i = 0; i < state.num_agents(); ++i) {
        if (state.agents[static_cast<std::size_t>(i)].reached) continue;
        active.push_back(i);
        obs.push_back(env::observe(state, i));
      }
      const net::ObsBatch clean = net::to_batch(obs);
      const net::PolicyBatch clean_out = net::forward(*p.params, clean);
      const net::PolicyBatch seen_out = net::forward(*p.params, attack::apply(spec, *p.params, clean, rng));
      std::vector<env::Action> actions(state.agents.size(), env::Action::Wait);
      for (std::size_t k = 0; k < active.size(); ++k) {
        const auto row = static_cast<Eigen::Index>(k);
        auto& slot = current[static_cast<std::size_t>(active[k])];
        slot.clean_action = clean_out.argmax(row);
        slot.attacked_action = seen_out.argmax(row);
        slot.flip = *slot.clean_action != *slot.attacked_action;
        if (slot.flip) ++track.flips;
        actions[static_cast<std::size_t>(active[k])] = static_cast<env::Action>(*slot.attacked_action);
      }
      track.steps.push_back(std::move(current));
      env::step(state, actions);
      current = snapshot();
    }
    track.steps.push_back(std::move(current));
    track.success = env::success_rate(state);
    board.tracks.push_back(std::move(track));
  }
  return board;
}

std::string storyboard_svg(const Storyboard& board, std::size_t track_index) {
  const StoryboardTrack& track = board.tracks.at(track_index);
  const env::EpisodeState inst = env::instance_from_json(board.instance);
  const int side = inst.map.side();
  constexpr int kCell = 12;
  constexpr int kGap = 10;
  constexpr int kHeader = 16;
  const int frame = side * kCell;
  const int frames = static_cast<int>(track.steps.size());
  static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf"};
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << frames * (frame + kGap) + kGap << "\" height=\""
    << frame + kHeader + 2 * kGap << "\" font-family=\"monospace\" font-size=\"8\">\n";
  s << "<text x=\"" << kGap << "\" y=\"11\">" << track.name << " flips=" << track.flips << " success=" << track.success
    << "</text>\n";
  for (int f = 0; f < frames; ++f) {
    const int ox = kGap + f * (frame + kGap);
    const int oy = kHeader + kGap;
    s << "<g transform=\"translate(" << ox << ',' << oy << ")\">\n";
    s << "<rect width=\"" << frame << "\" height=\"" << frame << "\" fill=\"white\" stroke=\"#888\"/>\n";
    for (env::Cell c : inst.map.obstacles())
      s << "<rect x=\"" << c.col * kCell << "\" y=\"" << c.row * kCell << "\" width=\"" << kCell << "\" height=\""
        << kCell << "\" fill=\"#333\"/>\n";
    for (std::size_t a = 0; a < inst.agents.size(); ++a) {
      const env::Cell g = inst.agents[a].goal;
      s << "<rect x=\"" << g.col * kCell + 2 << "\" y=\"" << g.row * kCell + 2 << "\" width=\"" << kCell - 4
        << "\" height=\"" << kCell - 4 << "\" fill=\"none\" stroke=\"" << colors[a % 8] << "\"/>\n";
    }
    const auto& agents = track.steps[static_cast<std::size_t>(f)];
    for (std::size_t a = 0; a < agents.size(); ++a) {
      const auto& st = agents[a];
      const int cx = st.pos.col * kCell + kCell / 2, cy = st.pos.row * kCell + kCell / 2;
      const char* fill = st.reached ? "white" : colors[a % 8];
      s << "<circle cx=\"" << cx << "\" cy=\"" << cy << "\" r=\"" << kCell / 2 - 1 << "\" fill=\"" << fill
        << "\" stroke=\"" << (st.flip ? "red" : colors[a % 8]) << "\" stroke-width=\"" << (st.flip ? 2 : 1) << "\"/>\n";
      if (!st.reached)
        s << "<text x=\"" << cx - 2 << "\" y=\"" << cy + 3 << "\" fill=\"white\">" << a << "</text>\n";
    }
    s << "<text x=\"0\" y=\"" << frame + 9 << "\">t=" << f << "</text>\n</g>\n";
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace robmapf::eval
