#include <algorithm>
#include <cmath>
#include <string>

#include "quoka/random.hpp"
#include "quoka/selectors.hpp"
#include "selectors/scoring.hpp"

namespace quoka {

namespace {

std::vector<float> take_channels(MatrixView x, std::span<const std::size_t> channels)
{
    std::vector<float> out(x.rows * channels.size());
    for (std::size_t i = 0; i < x.rows; ++i) {
        const auto row = x.row(i);
        for (std::size_t c = 0; c < channels.size(); ++c) {
            out[i * channels.size() + c] = row[channels[c]];
        }
    }
    return out;
}

Selection empty_selection(std::size_t n_kv)
{
    return Selection{std::vector<std::vector<std::size_t>>(n_kv), 0};
}

} // namespace

Selection channel_select(const Tensor& q, std::span<const MatrixView> k_cache,
                         const std::vector<std::vector<std::size_t>>& channels, std::size_t budget,
                         const HeadLayout& layout, ScoringCost* cost)
{
    detail::check_inputs(q, k_cache, layout);
    if (budget < 1) {
        throw ValidationError("channel_select: budget must be >= 1");
    }
    if (channels.size() != layout.n_kv) {
        throw DimensionError("channel_select: need one channel list per kv head");
    }
    const std::size_t t_k = k_cache.front().rows;
    if (t_k == 0) {
        return empty_selection(layout.n_kv);
    }
    const std::size_t t_q = q.dim(1);
    Selection sel;
    sel.indices.resize(layout.n_kv);
    for (std::size_t kv = 0; kv < layout.n_kv; ++kv) {
        const auto& ch = channels[kv];
        if (ch.empty() || ch.size() > layout.d) {
            throw ValidationError("channel_select: channel count must be in [1, d]");
        }
        for (std::size_t c : ch) {
            if (c >= layout.d) {
                throw BoundsError("channel_select: channel " + std::to_string(c) + " >= d");
            }
        }
        std::vector<std::vector<float>> q_store(layout.group_size());
        std::vector<MatrixView> group;
        for (std::size_t g = 0; g < layout.group_size(); ++g) {
            q_store[g] = take_channels(q.head(kv * layout.group_size() + g), ch);
            group.emplace_back(q_store[g], t_q, ch.size());
        }
        const auto k_store = take_channels(k_cache[kv], ch);
        const auto scores = detail::score_group(group, MatrixView(k_store, t_k, ch.size()), Scoring::dot,
                                                QueryAggregation::mean, true, kDefaultEps, cost);
        sel.indices[kv] = topk_indices(scores, budget);
        if (cost != nullptr) {
            cost->ops += t_k;
        }
    }
    sel.budget_used = std::min(budget, t_k);
    return sel;
}

std::vector<std::vector<std::size_t>> sparq_channels(const Tensor& q, std::size_t d_l, const HeadLayout& layout)
{
    layout.validate();
    if (d_l < 1 || d_l > layout.d) {
        throw ValidationError("sparq: d_l must be in [1, d]");
    }
    const std::size_t t_q = q.dim(1);
    std::vector<std::vector<std::size_t>> out(layout.n_kv);
    std::vector<float> magnitude(layout.d);
    for (std::size_t kv = 0; kv < layout.n_kv; ++kv) {
        std::fill(magnitude.begin(), magnitude.end(), 0.0f);
        for (std::size_t g = 0; g < layout.group_size(); ++g) {
            const MatrixView qh = q.head(kv * layout.group_size() + g);
            for (std::size_t i = 0; i < t_q; ++i) {
                const auto row = qh.row(i);
                for (std::size_t c = 0; c < layout.d; ++c) {
                    magnitude[c] += std::fabs(row[c]);
                }
            }
        }
        const auto count = static_cast<float>(layout.group_size() * t_q);
        for (float& m : magnitude) {
            m /= count;
        }
        out[kv] = topk_indices(magnitude, d_l);
    }
    return out;
}

Selection sparq_select(const Tensor& q, std::span<const MatrixView> k_cache, std::size_t d_l, std::size_t budget,
                       const HeadLayout& layout, ScoringCost* cost)
{
    detail::check_inputs(q, k_cache, layout);
    const auto channels = sparq_channels(q, d_l, layout);
    if (cost != nullptr) {
        cost->ops += layout.n_q * q.dim(1) * layout.d;
    }
    return channel_select(q, k_cache, channels, budget, layout, cost);
}

Selection sparq_select(const Tensor& q, const Tensor& k_cache, std::size_t d_l, std::size_t budget,
                       const HeadLayout& layout, ScoringCost* cost)
{
    const auto views = detail::head_views(k_cache);
    return sparq_select(q, views, d_l, budget, layout, cost);
}

void validate_orthonormal(const Tensor& projection, double tol)
{
    const MatrixView p = projection.as_matrix();
    if (p.cols == 0 || p.cols > p.rows) {
        throw ValidationError("projection: need 1 <= d_l <= d columns");
    }
    for (std::size_t a = 0; a < p.cols; ++a) {
        for (std::size_t b = a; b < p.cols; ++b) {
            double dot = 0.0;
            for (std::size_t r = 0; r < p.rows; ++r) {
                dot += static_cast<double>(p(r, a)) * static_cast<double>(p(r, b));
            }
            const double want = a == b ? 1.0 : 0.0;
            if (std::fabs(dot - want) > tol) {
                throw ValidationError("projection: columns " + std::to_string(a) + "," + std::to_string(b) +
                                      " are not orthonormal (dot=" + std::to_string(dot) + ")");
            }
        }
    }
}

Tensor random_orthonormal(std::size_t d, std::size_t d_l, std::uint64_t seed)
{
    if (d_l < 1 || d_l > d) {
        throw ValidationError("random_orthonormal: need 1 <= d_l <= d");
    }
    Rng rng(mix_seed(seed, 0x4c4f4b49));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<std::vector<double>> cols;
    while (cols.size() < d_l) {
        std::vector<double> v(d);
        for (double& x : v) {
            x = normal(rng);
        }
        for (const auto& u : cols) {
            double dot = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                dot += u[i] * v[i];
            }
            for (std::size_t i = 0; i < d; ++i) {
                v[i] -= dot * u[i];
            }
        }
        double norm = 0.0;
        for (double x : v) {
            norm += x * x;
        }
        norm = std::sqrt(norm);
        if (norm < 1e-6) {
            continue; // numerically dependent draw, resample
        }
        for (double& x : v) {
            x /= norm;
        }
        cols.push_back(std::move(v));
    }
    Tensor p({d, d_l});
    for (std::size_t r = 0; r < d; ++r) {
        for (std::size_t c = 0; c < d_l; ++c) {
            p.at(r, c) = static_cast<float>(cols[c][r]);
        }
    }
    return p;
}

Selection loki_select(const Tensor& q, std::span<const MatrixView> k_cache, const Tensor& projection,
                      std::size_t budget, const HeadLayout& layout, ScoringCost* cost)
{
    detail::check_inputs(q, k_cache, layout);
    if (budget < 1) {
        throw ValidationError("loki: budget must be >= 1");
    }
    const MatrixView p = projection.as_matrix();
    if (p.rows != layout.d) {
        throw DimensionError("loki: projection must have d rows");
    }
    validate_orthonormal(projection);
    const std::size_t t_k = k_cache.front().rows;
    if (t_k == 0) {
        return empty_selection(layout.n_kv);
    }
    const std::size_t d_l = p.cols;
    const std::size_t t_q = q.dim(1);

    // matmul takes its right operand transposed: P^T is d_l x d.
    std::vector<float> pt(d_l * layout.d);
    for (std::size_t r = 0; r < layout.d; ++r) {
        for (std::size_t c = 0; c < d_l; ++c) {
            pt[c * layout.d + r] = p(r, c);
        }
    }
    const MatrixView ptv(pt, d_l, layout.d);

    Selection sel;
    sel.indices.resize(layout.n_kv);
    for (std::size_t kv = 0; kv < layout.n_kv; ++kv) {
        std::vector<std::vector<float>> q_store(layout.group_size(), std::vector<float>(t_q * d_l));
        std::vector<MatrixView> group;
        for (std::size_t g = 0; g < layout.group_size(); ++g) {
            matmul_into(q.head(kv * layout.group_size() + g), ptv, q_store[g]);
            group.emplace_back(q_store[g], t_q, d_l);
        }
        std::vector<float> k_proj(t_k * d_l);
        matmul_into(k_cache[kv], ptv, k_proj);
        const auto scores = detail::score_group(group, MatrixView(k_proj, t_k, d_l), Scoring::dot,
                                                QueryAggregation::mean, true, kDefaultEps, cost);
        sel.indices[kv] = topk_indices(scores, budget);
        if (cost != nullptr) {
            cost->ops += (layout.group_size() * t_q + t_k) * layout.d * d_l + t_k;
        }
    }
    sel.budget_used = std::min(budget, t_k);
    return sel;
}

Selection loki_select(const Tensor& q, const Tensor& k_cache, const Tensor& projection, std::size_t budget,
                      const HeadLayout& layout, ScoringCost* cost)
{
    const auto views = detail::head_views(k_cache);
    return loki_select(q, views, projection, budget, layout, cost);
}

bool less_is_more_gate(std::size_t layer_index, std::span<const std::size_t> scoring_layers)
{
    return std::find(scoring_layers.begin(), scoring_layers.end(), layer_index) != scoring_layers.end();
}

std::string selector_name(const SelectorSpec& spec)
{
    struct Visitor {
        std::string operator()(const DenseSelector&) const { return "dense"; }
        std::string operator()(const QuokaSelector& s) const
        {
            const auto& c = s.config;
            if (c.is_canonical()) {
                return "quoka";
            }
            return "quoka[" + to_string(c.scoring) + "," + to_string(c.query_aggregation) + "," +
                   to_string(c.query_subselection) + (c.gqa_preaggregate ? ",pre" : ",post") + "]";
        }
        std::string operator()(const SparqSelector&) const { return "sparq"; }
        std::string operator()(const LokiSelector&) const { return "loki"; }
        std::string operator()(const LessIsMoreSelector&) const { return "less_is_more"; }
    };
    return std::visit(Visitor{}, spec);
}

std::size_t selector_budget(const SelectorSpec& spec)
{
    struct Visitor {
        std::size_t operator()(const DenseSelector&) const { return 0; }
        std::size_t operator()(const QuokaSelector& s) const { return s.config.B_SA; }
        std::size_t operator()(const SparqSelector& s) const { return s.B_SA; }
        std::size_t operator()(const LokiSelector& s) const { return s.B_SA; }
        std::size_t operator()(const LessIsMoreSelector& s) const { return s.inner.B_SA; }
    };
    return std::visit(Visitor{}, spec);
}

SelectorSpec with_budget(const SelectorSpec& spec, std::size_t budget)
{
    SelectorSpec out = spec;
    std::visit(
        [budget](auto& s) {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, QuokaSelector>) {
                s.config.B_SA = budget;
            } else if constexpr (std::is_same_v<T, SparqSelector> || std::is_same_v<T, LokiSelector>) {
                s.B_SA = budget;
            } else if constexpr (std::is_same_v<T, LessIsMoreSelector>) {
                s.inner.B_SA = budget;
            }
        },
        out);
    return out;
}

SelectorSpec with_max_queries(const SelectorSpec& spec, std::size_t max_queries)
{
    SelectorSpec out = spec;
    std::visit(
        [max_queries](auto& s) {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, QuokaSelector>) {
                s.config.N_Q = max_queries;
            } else if constexpr (std::is_same_v<T, LessIsMoreSelector>) {
                s.inner.N_Q = max_queries;
            }
        },
        out);
    return out;
}

} // namespace quoka
