#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "robmapf/config.hpp"
#include "robmapf/eval_harness.hpp"

namespace robmapf::cli {

inline constexpr const char* kToolVersion = "robmapf 1.0.0";

// Subcommands, in pipeline order.
const std::vector<std::string>& modes();

// Runs one mode and writes its artifacts plus manifest.json under `out`.
// Throws config::ConfigError on invalid input, other exceptions on failure.
nlohmann::json run_mode(const std::string& mode, const config::RunConfig& cfg, const std::filesystem::path& out,
                        int jobs);

// Cross-seed mean and sample standard deviation (ddof = 1) per metric.
nlohmann::json summarize_reports(std::span<const eval::EvalReport> reports);

// Paired bootstrap of per-cell means, a minus b. The grids must match.
eval::BootstrapResult compare_reports(const eval::EvalReport& a, const eval::EvalReport& b, int resamples,
                                      std::uint64_t seed);

eval::EvalReport load_report(const std::filesystem::path& path);

// Full command line; returns the process exit code (0, 2 validation, 3 runtime).
int main(int argc, char** argv);

}  // namespace robmapf::cli
