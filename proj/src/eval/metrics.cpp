#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <string>

#include "json.hpp"
#include "quoka/eval.hpp"

namespace quoka {

namespace {

std::string format_double(double x)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", x);
    return buf;
}

std::string csv_field(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') {
            out += '"';
        }
        out += c;
    }
    return out + "\"";
}

} // namespace

double attention_error(const Tensor& dense, const Tensor& sparse, double eps)
{
    if (dense.shape() != sparse.shape()) {
        throw DimensionError("attention_error: shapes differ");
    }
    double diff = 0.0;
    double norm = 0.0;
    const auto a = dense.data();
    const auto b = sparse.data();
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double x = a[i];
        const double e = x - static_cast<double>(b[i]);
        diff += e * e;
        norm += x * x;
    }
    return std::sqrt(diff) / std::max(std::sqrt(norm), eps);
}

std::vector<std::vector<std::size_t>> oracle_kv_set(const Tensor& weights, std::size_t cached, std::size_t budget,
                                                    const HeadLayout& layout)
{
    layout.validate();
    if (weights.rank() != 3 || weights.dim(0) != layout.n_q) {
        throw DimensionError("oracle_kv_set: weights must be [n_q x t_q x t_k]");
    }
    const std::size_t t_q = weights.dim(1);
    const std::size_t t_k = weights.dim(2);
    if (cached < 1 || cached > t_k) {
        throw DegenerateError("oracle_kv_set: need 1 <= cached <= t_k");
    }
    if (budget < 1) {
        throw ValidationError("oracle_kv_set: budget must be >= 1");
    }
    const std::size_t g = layout.group_size();
    std::vector<std::vector<std::size_t>> out(layout.n_kv);
    for (std::size_t kv = 0; kv < layout.n_kv; ++kv) {
        std::vector<double> mass(cached, 0.0);
        for (std::size_t h = kv * g; h < (kv + 1) * g; ++h) {
            for (std::size_t i = 0; i < t_q; ++i) {
                for (std::size_t j = 0; j < cached; ++j) {
                    mass[j] += weights.at(h, i, j);
                }
            }
        }
        std::vector<std::size_t> order(cached);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return mass[a] > mass[b]; });
        order.resize(std::min(budget, cached));
        std::sort(order.begin(), order.end());
        out[kv] = std::move(order);
    }
    return out;
}

double kv_recall(const Selection& selection, const Tensor& weights, std::size_t cached, std::size_t budget,
                 const HeadLayout& layout)
{
    if (weights.rank() != 3) {
        throw DimensionError("kv_recall: weights must be rank 3");
    }
    const std::size_t t_k = weights.dim(2);
    for (std::size_t h = 0; h < weights.dim(0); ++h) {
        for (std::size_t i = 0; i < weights.dim(1); ++i) {
            double total = 0.0;
            for (std::size_t j = 0; j < t_k; ++j) {
                total += weights.at(h, i, j);
            }
            if (std::fabs(total - 1.0) > 1e-4) {
                throw ValidationError("kv_recall: attention weights are not row-stochastic");
            }
        }
    }
    if (selection.indices.size() != layout.n_kv) {
        throw DimensionError("kv_recall: selection has the wrong number of kv heads");
    }
    const auto oracle = oracle_kv_set(weights, cached, budget, layout);
    double total = 0.0;
    for (std::size_t kv = 0; kv < layout.n_kv; ++kv) {
        std::vector<std::size_t> hit;
        std::set_intersection(selection.indices[kv].begin(), selection.indices[kv].end(), oracle[kv].begin(),
                              oracle[kv].end(), std::back_inserter(hit));
        total += static_cast<double>(hit.size()) / static_cast<double>(oracle[kv].size());
    }
    return total / static_cast<double>(layout.n_kv);
}

double needle_recall(const Selection& selection, std::span<const std::size_t> needles)
{
    if (needles.empty()) {
        throw DegenerateError("needle_recall: no needles, recall is undefined");
    }
    if (selection.indices.empty()) {
        throw DimensionError("needle_recall: selection has no kv heads");
    }
    double total = 0.0;
    for (const auto& idx : selection.indices) {
        std::size_t found = 0;
        for (std::size_t n : needles) {
            found += std::binary_search(idx.begin(), idx.end(), n) ? 1 : 0;
        }
        total += static_cast<double>(found) / static_cast<double>(needles.size());
    }
    return total / static_cast<double>(selection.indices.size());
}

std::vector<std::string> metrics_csv_columns()
{
    return {"selector", "T",        "B_CP",        "B_SA",         "N_Q",
            "seed",     "output_l2_error", "kv_recall", "needle_recall", "time_ms"};
}

std::string metrics_csv_header()
{
    std::string out = std::string("# schema: ") + kMetricsSchema + "\n";
    const auto cols = metrics_csv_columns();
    for (std::size_t i = 0; i < cols.size(); ++i) {
        out += (i ? "," : "") + cols[i];
    }
    return out + "\n";
}

std::string metrics_csv_row(const Metrics& m)
{
    const auto run = m.timings.find("run");
    const double ms = run == m.timings.end() ? 0.0 : run->second * 1000.0;
    std::string out = csv_field(m.selector);
    out += "," + std::to_string(m.T) + "," + std::to_string(m.B_CP) + "," + std::to_string(m.B_SA) + "," +
           std::to_string(m.N_Q) + "," + std::to_string(m.seed);
    out += "," + format_double(m.output_l2_error) + "," + format_double(m.kv_recall) + ",";
    if (m.needle_recall) {
        out += format_double(*m.needle_recall);
    }
    out += "," + format_double(ms) + "\n";
    return out;
}

std::string metrics_json_line(const Metrics& m, bool with_timings)
{
    nlohmann::ordered_json j;
    j["schema"] = kMetricsSchema;
    j["selector"] = m.selector;
    j["T"] = m.T;
    j["B_CP"] = m.B_CP;
    j["B_SA"] = m.B_SA;
    j["N_Q"] = m.N_Q;
    j["seed"] = m.seed;
    j["output_l2_error"] = m.output_l2_error;
    j["kv_recall"] = m.kv_recall;
    j["needle_recall"] = m.needle_recall ? nlohmann::ordered_json(*m.needle_recall) : nlohmann::ordered_json(nullptr);
    j["theorem_violations"] = m.theorem_violations;
    if (with_timings) {
        j["timings"] = m.timings;
    }
    return j.dump();
}

} // namespace quoka
