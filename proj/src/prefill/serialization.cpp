#include "quoka/serialization.hpp"

#include <algorithm>
#include <cstring>
#include <string>

namespace quoka {

void require_known_keys(const json& j, std::initializer_list<const char*> allowed, const char* where)
{
    if (!j.is_object()) {
        throw ConfigError(std::string(where) + ": expected a JSON object");
    }
    for (const auto& [key, value] : j.items()) {
        const bool ok = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; });
        if (!ok) {
            throw ConfigError(std::string(where) + ": unknown field \"" + key + "\"");
        }
    }
}

namespace {

template <typename T>
void read_field(const json& j, const char* key, T& out, const char* where)
{
    if (!j.contains(key)) {
        return;
    }
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string(where) + ": field \"" + key + "\": " + e.what());
    }
}

std::size_t read_positive(const json& j, const char* key, std::size_t fallback, const char* where)
{
    if (!j.contains(key)) {
        return fallback;
    }
    const auto& v = j.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 1) {
        throw ConfigError(std::string(where) + ": field \"" + key + "\" must be a positive integer");
    }
    return v.get<std::size_t>();
}

Scoring parse_scoring(const std::string& s)
{
    if (s == "cosine") {
        return Scoring::cosine;
    }
    if (s == "dot") {
        return Scoring::dot;
    }
    throw ConfigError("selector config: scoring must be \"cosine\" or \"dot\", got \"" + s + "\"");
}

QueryAggregation parse_aggregation(const std::string& s)
{
    if (s == "max") {
        return QueryAggregation::max;
    }
    if (s == "mean") {
        return QueryAggregation::mean;
    }
    throw ConfigError("selector config: query_aggregation must be \"max\" or \"mean\", got \"" + s + "\"");
}

QuerySubselection parse_subselection(const std::string& s)
{
    if (s == "keydiff") {
        return QuerySubselection::keydiff;
    }
    if (s == "uniform") {
        return QuerySubselection::uniform;
    }
    if (s == "none") {
        return QuerySubselection::none;
    }
    throw ConfigError("selector config: query_subselection must be keydiff|uniform|none, got \"" + s + "\"");
}

} // namespace

json to_json(const HeadLayout& layout)
{
    return {{"n_Q", layout.n_q}, {"n_KV", layout.n_kv}, {"d", layout.d}};
}

HeadLayout head_layout_from_json(const json& j)
{
    require_known_keys(j, {"n_Q", "n_KV", "d"}, "layout");
    HeadLayout layout;
    layout.n_q = read_positive(j, "n_Q", layout.n_q, "layout");
    layout.n_kv = read_positive(j, "n_KV", layout.n_kv, "layout");
    layout.d = read_positive(j, "d", layout.d, "layout");
    try {
        layout.validate();
    } catch (const DimensionError& e) {
        throw ConfigError(e.what());
    }
    return layout;
}

json to_json(const SelectorConfig& cfg)
{
    return {{"B_SA", cfg.B_SA},
            {"N_Q", cfg.N_Q},
            {"scoring", to_string(cfg.scoring)},
            {"query_aggregation", to_string(cfg.query_aggregation)},
            {"query_subselection", to_string(cfg.query_subselection)},
            {"gqa_preaggregate", cfg.gqa_preaggregate},
            {"eps", cfg.eps}};
}

SelectorConfig selector_config_from_json(const json& j)
{
    constexpr const char* where = "selector config";
    require_known_keys(j, {"B_SA", "N_Q", "scoring", "query_aggregation", "query_subselection", "gqa_preaggregate", "eps"},
                       where);
    SelectorConfig cfg;
    cfg.B_SA = read_positive(j, "B_SA", cfg.B_SA, where);
    cfg.N_Q = read_positive(j, "N_Q", cfg.N_Q, where);
    std::string s = to_string(cfg.scoring);
    read_field(j, "scoring", s, where);
    cfg.scoring = parse_scoring(s);
    s = to_string(cfg.query_aggregation);
    read_field(j, "query_aggregation", s, where);
    cfg.query_aggregation = parse_aggregation(s);
    s = to_string(cfg.query_subselection);
    read_field(j, "query_subselection", s, where);
    cfg.query_subselection = parse_subselection(s);
    read_field(j, "gqa_preaggregate", cfg.gqa_preaggregate, where);
    read_field(j, "eps", cfg.eps, where);
    if (!(cfg.eps > 0.0f)) {
        throw ConfigError("selector config: eps must be positive");
    }
    return cfg;
}

json to_json(const SelectorSpec& spec)
{
    struct Visitor {
        json operator()(const DenseSelector&) const { return {{"variant", "dense"}}; }
        json operator()(const QuokaSelector& s) const { return to_json(s.config); }
        json operator()(const SparqSelector& s) const { return {{"variant", "sparq"}, {"d_l", s.d_l}, {"B_SA", s.B_SA}}; }
        json operator()(const LokiSelector& s) const { return {{"variant", "loki"}, {"d_l", s.d_l}, {"B_SA", s.B_SA}}; }
        json operator()(const LessIsMoreSelector& s) const
        {
            return {{"variant", "less_is_more"}, {"config", to_json(s.inner)}, {"scoring_layers", s.scoring_layers}};
        }
    };
    return std::visit(Visitor{}, spec);
}

SelectorSpec selector_spec_from_json(const json& j)
{
    if (!j.is_object()) {
        throw ConfigError("selector: expected a JSON object");
    }
    if (!j.contains("variant")) {
        return QuokaSelector{selector_config_from_json(j)};
    }
    std::string variant;
    read_field(j, "variant", variant, "selector");
    if (variant == "dense") {
        require_known_keys(j, {"variant"}, "dense selector");
        return DenseSelector{};
    }
    if (variant == "quoka") {
        require_known_keys(j, {"variant", "config"}, "quoka selector");
        return QuokaSelector{j.contains("config") ? selector_config_from_json(j.at("config")) : SelectorConfig{}};
    }
    if (variant == "sparq" || variant == "loki") {
        require_known_keys(j, {"variant", "d_l", "B_SA"}, "channel-reduction selector");
        const std::size_t d_l = read_positive(j, "d_l", 64, "selector");
        const std::size_t budget = read_positive(j, "B_SA", 1024, "selector");
        if (variant == "sparq") {
            return SparqSelector{d_l, budget};
        }
        return LokiSelector{d_l, budget};
    }
    if (variant == "less_is_more") {
        require_known_keys(j, {"variant", "config", "scoring_layers"}, "less_is_more selector");
        LessIsMoreSelector s;
        if (j.contains("config")) {
            s.inner = selector_config_from_json(j.at("config"));
        }
        read_field(j, "scoring_layers", s.scoring_layers, "less_is_more selector");
        return s;
    }
    throw ConfigError("selector: unknown variant \"" + variant + "\"");
}

json to_json(const PrefillConfig& cfg)
{
    return {{"B_CP", cfg.B_CP},
            {"selector", to_json(cfg.selector)},
            {"layers", cfg.layers},
            {"layout", to_json(cfg.layout)},
            {"seed", cfg.seed}};
}

PrefillConfig prefill_config_from_json(const json& j)
{
    constexpr const char* where = "prefill config";
    require_known_keys(j, {"B_CP", "selector", "layers", "layout", "seed"}, where);
    PrefillConfig cfg;
    cfg.B_CP = read_positive(j, "B_CP", cfg.B_CP, where);
    cfg.layers = read_positive(j, "layers", cfg.layers, where);
    if (j.contains("layout")) {
        cfg.layout = head_layout_from_json(j.at("layout"));
    }
    if (j.contains("selector")) {
        cfg.selector = selector_spec_from_json(j.at("selector"));
    }
    read_field(j, "seed", cfg.seed, where);
    return cfg;
}

} // namespace quoka
