#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "quoka/eval.hpp"
#include "quoka/serialization.hpp"

namespace quoka {

enum ExitCode : int {
    kExitOk = 0,
    kExitPropertyFailure = 1,
    kExitConfigError = 2,
    kExitMeasurementError = 3,
};

struct CommandOptions {
    std::optional<std::filesystem::path> config;
    std::vector<std::string> overrides;   // KEY=VALUE, dotted keys
    std::optional<std::filesystem::path> out;
    std::optional<std::filesystem::path> report;
    std::optional<std::size_t> threads;
    std::optional<std::uint64_t> seed;
    bool jsonl = false;
};

// Built-in defaults, overlaid by the config file, then by each --set, then by
// --seed. Throws ConfigError.
json resolve_config(const json& defaults, const CommandOptions& opts);

// Applies one KEY=VALUE override in place. VALUE is parsed as JSON and taken
// as a plain string when that fails.
void apply_override(json& config, const std::string& assignment);

json default_verify_config();
json default_ablate_config();
json default_bench_config();

struct VerifyConfig {
    std::uint64_t seed = 0;
    double tolerance = 1e-5;
    double linearity_tolerance = 1e-6;
    double theorem_tolerance = 1e-5;
    std::size_t instances = 100;
    std::size_t oracle_instances = 500;
    std::size_t scale_instances = 200;
    std::size_t linearity_draws = 1000;
    std::size_t theorem_trials = 100000;
    std::vector<std::size_t> theorem_dims{2, 8, 64};
    std::vector<std::string> fixtures;
};
VerifyConfig verify_config_from_json(const json& j);

struct AblationChecks {
    bool ordering = false;          // canonical arm has the best mean needle recall
    double min_win_rate = 0.75;
    bool nq_monotonic = false;      // needle recall non-decreasing along the N_Q grid
    double max_nq_violations = 0.10;
};
struct AblateSettings {
    AblationConfig ablation;
    AblationChecks checks;
};
AblateSettings ablate_settings_from_json(const json& j);

struct BenchExpectations {
    std::optional<std::pair<double, double>> dense_prefill_slope;
    std::optional<std::pair<double, double>> quoka_prefill_slope;
    std::optional<double> min_speedup;
    std::optional<double> max_ops_ratio_spread;
};
struct BenchSettings {
    std::vector<std::size_t> T;
    ProbeConfig probe;                 // selector field unused; see arms
    std::vector<AblationArm> arms;     // dense is always measured first
    BenchExpectations expect;
};
BenchSettings bench_settings_from_json(const json& j);

inline constexpr const char* kBenchSchema = "quoka.bench.v1";
inline constexpr const char* kReportSchema = "quoka.report.v1";

int cmd_verify(const CommandOptions& opts, std::ostream& out, std::ostream& err);
int cmd_ablate(const CommandOptions& opts, std::ostream& out, std::ostream& err);
int cmd_bench(const CommandOptions& opts, std::ostream& out, std::ostream& err);

} // namespace quoka
