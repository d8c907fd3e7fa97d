#include <fstream>
#include <sstream>
#include <string>

#include "quoka/cli.hpp"

namespace quoka {

namespace {

template <typename T>
T get_as(const json& j, const char* key, const char* where)
{
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string(where) + ": field \"" + key + "\": " + e.what());
    }
}

std::size_t get_count(const json& j, const char* key, const char* where, std::size_t min = 1)
{
    const auto& v = j.at(key);
    if (!v.is_number_integer() || v.get<long long>() < static_cast<long long>(min)) {
        throw ConfigError(std::string(where) + ": field \"" + key + "\" must be an integer >= " + std::to_string(min));
    }
    return v.get<std::size_t>();
}

double get_number(const json& j, const char* key, const char* where)
{
    const auto& v = j.at(key);
    if (!v.is_number()) {
        throw ConfigError(std::string(where) + ": field \"" + key + "\" must be a number");
    }
    return v.get<double>();
}

std::vector<std::size_t> get_counts(const json& j, const char* key, const char* where)
{
    const auto& v = j.at(key);
    if (!v.is_array()) {
        throw ConfigError(std::string(where) + ": field \"" + key + "\" must be an array");
    }
    if (v.empty()) {
        throw ConfigError(std::string(where) + ": field \"" + key + "\" is an empty grid");
    }
    std::vector<std::size_t> out;
    for (const auto& x : v) {
        if (!x.is_number_integer() || x.get<long long>() < 1) {
            throw ConfigError(std::string(where) + ": field \"" + key + "\" must hold positive integers");
        }
        out.push_back(x.get<std::size_t>());
    }
    return out;
}

std::optional<std::pair<double, double>> get_range(const json& j, const char* key, const char* where)
{
    if (!j.contains(key)) {
        return std::nullopt;
    }
    const auto& v = j.at(key);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
        throw ConfigError(std::string(where) + ": field \"" + key + "\" must be [low, high]");
    }
    return std::make_pair(v[0].get<double>(), v[1].get<double>());
}

} // namespace

json default_verify_config()
{
    return {{"seed", 0},
            {"tolerance", 1e-5},
            {"linearity_tolerance", 1e-6},
            {"theorem_tolerance", 1e-5},
            {"instances", 100},
            {"oracle_instances", 500},
            {"scale_instances", 200},
            {"linearity_draws", 1000},
            {"theorem_trials", 100000},
            {"theorem_dims", {2, 8, 64}},
            {"fixtures", json::array()}};
}

json default_ablate_config()
{
    return {{"seed", 0},
            {"layout", {{"n_Q", 4}, {"n_KV", 2}, {"d", 64}}},
            {"T", 1024},
            {"B_CP", 128},
            {"selector", {{"B_SA", 112}, {"N_Q", 16}}},
            {"scoring", {"cosine", "dot"}},
            {"query_aggregation", {"max", "mean"}},
            {"arms", json::array()},
            {"seeds", 20},
            {"workload", "needle"},
            {"needles", 4},
            {"alignment", 0.9},
            {"noise_scale", 0.3},
            {"query_jitter", 0.3},
            {"record_timings", false},
            {"checks", {{"ordering", false}, {"min_win_rate", 0.75}, {"nq_monotonic", false}, {"max_nq_violations", 0.1}}}};
}

json default_bench_config()
{
    return {{"seed", 0},
            {"layout", {{"n_Q", 2}, {"n_KV", 1}, {"d", 32}}},
            {"T", {2048, 4096, 8192, 16384, 32768}},
            {"B_CP", 128},
            {"selector", {{"B_SA", 1024}, {"N_Q", 16}}},
            {"arms", json::array()},
            {"repeats", 3},
            {"warmup", 1},
            {"per_step", true},
            {"whole_prefill", true},
            {"expect", json::object()}};
}

void apply_override(json& config, const std::string& assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("--set expects KEY=VALUE, got \"" + assignment + "\"");
    }
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(text);
    } catch (const json::exception&) {
        value = text;
    }
    json* node = &config;
    std::size_t start = 0;
    for (;;) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) {
            throw ConfigError("--set: malformed key \"" + key + "\"");
        }
        if (!node->is_object()) {
            throw ConfigError("--set: \"" + key + "\" descends into a non-object");
        }
        if (dot == std::string::npos) {
            (*node)[part] = value;
            return;
        }
        node = &(*node)[part];
        if (node->is_null()) {
            *node = json::object();
        }
        start = dot + 1;
    }
}

json resolve_config(const json& defaults, const CommandOptions& opts)
{
    json config = defaults;
    if (opts.config) {
        std::ifstream in(*opts.config);
        if (!in) {
            throw ConfigError("cannot open config " + opts.config->string());
        }
        json file;
        try {
            file = json::parse(in);
        } catch (const json::exception& e) {
            throw ConfigError("config " + opts.config->string() + " is not valid JSON: " + e.what());
        }
        if (!file.is_object()) {
            throw ConfigError("config " + opts.config->string() + " must hold a JSON object");
        }
        config.merge_patch(file);
    }
    for (const auto& o : opts.overrides) {
        apply_override(config, o);
    }
    if (opts.seed) {
        config["seed"] = *opts.seed;
    }
    return config;
}

VerifyConfig verify_config_from_json(const json& j)
{
    constexpr const char* where = "verify config";
    require_known_keys(j,
                       {"seed", "tolerance", "linearity_tolerance", "theorem_tolerance", "instances", "oracle_instances",
                        "scale_instances", "linearity_draws", "theorem_trials", "theorem_dims", "fixtures"},
                       where);
    VerifyConfig c;
    c.seed = get_as<std::uint64_t>(j, "seed", where);
    c.tolerance = get_number(j, "tolerance", where);
    c.linearity_tolerance = get_number(j, "linearity_tolerance", where);
    c.theorem_tolerance = get_number(j, "theorem_tolerance", where);
    if (c.tolerance < 0.0 || c.linearity_tolerance < 0.0 || c.theorem_tolerance < 0.0) {
        throw ConfigError("verify config: tolerances must be >= 0");
    }
    c.instances = get_count(j, "instances", where);
    c.oracle_instances = get_count(j, "oracle_instances", where);
    c.scale_instances = get_count(j, "scale_instances", where);
    c.linearity_draws = get_count(j, "linearity_draws", where);
    c.theorem_trials = get_count(j, "theorem_trials", where);
    c.theorem_dims = get_counts(j, "theorem_dims", where);
    for (std::size_t d : c.theorem_dims) {
        if (d < 2) {
            throw ConfigError("verify config: theorem_dims entries must be >= 2");
        }
    }
    c.fixtures = get_as<std::vector<std::string>>(j, "fixtures", where);
    return c;
}

AblateSettings ablate_settings_from_json(const json& j)
{
    constexpr const char* where = "ablate config";
    require_known_keys(j,
                       {"seed", "layout", "T", "B_CP", "selector", "scoring", "query_aggregation", "arms", "B_SA", "N_Q",
                        "seeds", "workload", "needles", "alignment", "noise_scale", "query_jitter", "record_timings",
                        "checks"},
                       where);
    AblateSettings s;
    AblationConfig& a = s.ablation;
    a.seed = get_as<std::uint64_t>(j, "seed", where);
    a.layout = head_layout_from_json(j.at("layout"));
    a.T = get_count(j, "T", where, 2);
    a.B_CP = get_count(j, "B_CP", where);
    const SelectorConfig base = selector_config_from_json(j.at("selector"));
    a.B_SA_grid = j.contains("B_SA") ? get_counts(j, "B_SA", where) : std::vector<std::size_t>{base.B_SA};
    a.N_Q_grid = j.contains("N_Q") ? get_counts(j, "N_Q", where) : std::vector<std::size_t>{base.N_Q};

    for (const auto& sc : get_as<std::vector<std::string>>(j, "scoring", where)) {
        for (const auto& ag : get_as<std::vector<std::string>>(j, "query_aggregation", where)) {
            json cj = to_json(base);
            cj["scoring"] = sc;
            cj["query_aggregation"] = ag;
            const SelectorSpec spec = QuokaSelector{selector_config_from_json(cj)};
            a.arms.push_back({spec, selector_name(spec)});
        }
    }
    if (!j.at("arms").is_array()) {
        throw ConfigError("ablate config: \"arms\" must be an array of selector objects");
    }
    for (const auto& arm : j.at("arms")) {
        const SelectorSpec spec = selector_spec_from_json(arm);
        a.arms.push_back({spec, selector_name(spec)});
    }
    a.seeds = get_count(j, "seeds", where);
    a.workload = get_as<std::string>(j, "workload", where);
    a.needles = get_count(j, "needles", where, 0);
    a.alignment = static_cast<float>(get_number(j, "alignment", where));
    a.noise_scale = static_cast<float>(get_number(j, "noise_scale", where));
    a.query_jitter = static_cast<float>(get_number(j, "query_jitter", where));
    a.record_timings = get_as<bool>(j, "record_timings", where);

    const json& cj = j.at("checks");
    require_known_keys(cj, {"ordering", "min_win_rate", "nq_monotonic", "max_nq_violations"}, "ablate checks");
    if (cj.contains("ordering")) {
        s.checks.ordering = get_as<bool>(cj, "ordering", "ablate checks");
    }
    if (cj.contains("min_win_rate")) {
        s.checks.min_win_rate = get_number(cj, "min_win_rate", "ablate checks");
    }
    if (cj.contains("nq_monotonic")) {
        s.checks.nq_monotonic = get_as<bool>(cj, "nq_monotonic", "ablate checks");
    }
    if (cj.contains("max_nq_violations")) {
        s.checks.max_nq_violations = get_number(cj, "max_nq_violations", "ablate checks");
    }
    a.validate();
    return s;
}

BenchSettings bench_settings_from_json(const json& j)
{
    constexpr const char* where = "bench config";
    require_known_keys(j,
                       {"seed", "layout", "T", "B_CP", "selector", "arms", "repeats", "warmup", "per_step",
                        "whole_prefill", "expect"},
                       where);
    BenchSettings s;
    s.T = get_counts(j, "T", where);
    if (s.T.size() < 4) {
        throw ConfigError("bench config: T grid needs at least 4 lengths");
    }
    for (std::size_t i = 1; i < s.T.size(); ++i) {
        if (s.T[i] <= s.T[i - 1]) {
            throw ConfigError("bench config: T grid must be strictly ascending");
        }
    }
    s.probe.layout = head_layout_from_json(j.at("layout"));
    s.probe.B_CP = get_count(j, "B_CP", where);
    s.probe.repeats = get_count(j, "repeats", where, 3);
    s.probe.warmup = get_count(j, "warmup", where, 0);
    s.probe.seed = get_as<std::uint64_t>(j, "seed", where);
    s.probe.per_step = get_as<bool>(j, "per_step", where);
    s.probe.whole_prefill = get_as<bool>(j, "whole_prefill", where);
    if (!s.probe.per_step && !s.probe.whole_prefill) {
        throw ConfigError("bench config: enable per_step or whole_prefill");
    }
    const SelectorSpec primary = selector_spec_from_json(j.at("selector"));
    s.arms.push_back({DenseSelector{}, "dense"});
    s.arms.push_back({primary, selector_name(primary)});
    if (!j.at("arms").is_array()) {
        throw ConfigError("bench config: \"arms\" must be an array of selector objects");
    }
    for (const auto& arm : j.at("arms")) {
        const SelectorSpec spec = selector_spec_from_json(arm);
        s.arms.push_back({spec, selector_name(spec)});
    }
    const json& e = j.at("expect");
    require_known_keys(e, {"dense_prefill_slope", "quoka_prefill_slope", "min_speedup", "max_ops_ratio_spread"},
                       "bench expect");
    s.expect.dense_prefill_slope = get_range(e, "dense_prefill_slope", "bench expect");
    s.expect.quoka_prefill_slope = get_range(e, "quoka_prefill_slope", "bench expect");
    if (e.contains("min_speedup")) {
        s.expect.min_speedup = get_number(e, "min_speedup", "bench expect");
    }
    if (e.contains("max_ops_ratio_spread")) {
        s.expect.max_ops_ratio_spread = get_number(e, "max_ops_ratio_spread", "bench expect");
    }
    // Validate every arm against the layout up front.
    for (const auto& arm : s.arms) {
        PrefillConfig p;
        p.B_CP = s.probe.B_CP;
        p.layout = s.probe.layout;
        p.selector = arm.selector;
        try {
            p.validate();
        } catch (const ValidationError& err) {
            throw ConfigError(std::string("bench config: ") + err.what());
        }
    }
    return s;
}

} // namespace quoka
