#include "quoka/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "quoka/random.hpp"

namespace quoka::oracle {

namespace {

using Vec = std::vector<double>;

Vec row_of(const Tensor& x, std::size_t head, std::size_t i)
{
    const std::size_t d = x.dim(2);
    Vec out(d);
    for (std::size_t c = 0; c < d; ++c) {
        out[c] = static_cast<double>(x.at(head, i, c));
    }
    return out;
}

double dot(const Vec& a, const Vec& b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

Vec unit(const Vec& a, double eps)
{
    const double n = std::max(std::sqrt(dot(a, a)), eps);
    Vec out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        out[i] = a[i] / n;
    }
    return out;
}

} // namespace

std::vector<double> matmul(const Tensor& a, const Tensor& b_transposed)
{
    const std::size_t m = a.dim(0);
    const std::size_t k = a.dim(1);
    const std::size_t n = b_transposed.dim(0);
    if (b_transposed.dim(1) != k) {
        throw DimensionError("oracle matmul: inner dimensions differ");
    }
    std::vector<double> out(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t t = 0; t < k; ++t) {
                s += static_cast<double>(a.at(i, t)) * static_cast<double>(b_transposed.at(j, t));
            }
            out[i * n + j] = s;
        }
    }
    return out;
}

std::vector<double> softmax(std::span<const double> logits)
{
    const double top = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - top);
        total += out[i];
    }
    for (double& x : out) {
        x /= total;
    }
    return out;
}

std::vector<std::size_t> top_k(std::span<const double> scores, std::size_t k)
{
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    order.resize(std::min(k, order.size()));
    std::sort(order.begin(), order.end());
    return order;
}

std::vector<double> dense_attention(const Tensor& q, const Tensor& k, const Tensor& v, const HeadLayout& layout,
                                    std::size_t causal_offset)
{
    const std::size_t t_q = q.dim(1);
    const std::size_t t_k = k.dim(1);
    const std::size_t d = layout.d;
    const std::size_t g = layout.n_q / layout.n_kv;
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    std::vector<double> out(layout.n_q * t_q * d, 0.0);
    for (std::size_t h = 0; h < layout.n_q; ++h) {
        const std::size_t kv = h / g;
        for (std::size_t i = 0; i < t_q; ++i) {
            const std::size_t visible = std::min(t_k, causal_offset + i + 1);
            const Vec qi = row_of(q, h, i);
            std::vector<double> logits(visible);
            for (std::size_t j = 0; j < visible; ++j) {
                logits[j] = dot(qi, row_of(k, kv, j)) * scale;
            }
            const auto w = softmax(logits);
            for (std::size_t j = 0; j < visible; ++j) {
                for (std::size_t c = 0; c < d; ++c) {
                    out[(h * t_q + i) * d + c] += w[j] * static_cast<double>(v.at(kv, j, c));
                }
            }
        }
    }
    return out;
}

std::vector<std::vector<std::size_t>> keydiff_positions(const Tensor& q, std::size_t max_queries, double eps)
{
    const std::size_t heads = q.dim(0);
    const std::size_t t_q = q.dim(1);
    const std::size_t d = q.dim(2);
    std::vector<std::vector<std::size_t>> out(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        if (t_q <= max_queries) {
            out[h].resize(t_q);
            std::iota(out[h].begin(), out[h].end(), std::size_t{0});
            continue;
        }
        Vec mean(d, 0.0);
        for (std::size_t i = 0; i < t_q; ++i) {
            const Vec r = row_of(q, h, i);
            for (std::size_t c = 0; c < d; ++c) {
                mean[c] += r[c];
            }
        }
        for (double& m : mean) {
            m /= static_cast<double>(t_q);
        }
        const Vec mu = unit(mean, eps);
        std::vector<double> neg_cos(t_q);
        for (std::size_t i = 0; i < t_q; ++i) {
            neg_cos[i] = -dot(unit(row_of(q, h, i), eps), mu);
        }
        out[h] = top_k(neg_cos, max_queries);
    }
    return out;
}

Selection select(const Tensor& q, const Tensor& k_cache, const SelectorConfig& cfg, const HeadLayout& layout,
                 std::uint64_t seed)
{
    const std::size_t t_q = q.dim(1);
    const std::size_t t_k = k_cache.dim(1);
    const std::size_t g = layout.n_q / layout.n_kv;
    const double eps = static_cast<double>(cfg.eps);
    const bool cosine = cfg.scoring == Scoring::cosine;

    std::vector<std::vector<std::size_t>> positions;
    if (t_q > cfg.N_Q && cfg.query_subselection == QuerySubselection::keydiff) {
        positions = keydiff_positions(q, cfg.N_Q, eps);
    } else if (t_q > cfg.N_Q && cfg.query_subselection == QuerySubselection::uniform) {
        Rng rng(mix_seed(seed));
        positions.assign(layout.n_q, sample_without_replacement(rng, t_q, cfg.N_Q));
    } else {
        positions.assign(layout.n_q, std::vector<std::size_t>(t_q));
        for (auto& p : positions) {
            std::iota(p.begin(), p.end(), std::size_t{0});
        }
    }
    const std::size_t m = positions.front().size();

    Selection sel;
    sel.indices.resize(layout.n_kv);
    for (std::size_t kv = 0; kv < layout.n_kv; ++kv) {
        std::vector<double> aggregated(t_k, 0.0);
        for (std::size_t j = 0; j < t_k; ++j) {
            Vec key = row_of(k_cache, kv, j);
            if (cosine) {
                key = unit(key, eps);
            }
            double best = -INFINITY;
            double total = 0.0;
            for (std::size_t slot = 0; slot < m; ++slot) {
                double s = 0.0;
                for (std::size_t hh = 0; hh < g; ++hh) {
                    const std::size_t h = kv * g + hh;
                    Vec qv = row_of(q, h, positions[h][slot]);
                    if (cosine) {
                        qv = unit(qv, eps);
                    }
                    s += dot(qv, key);
                }
                s /= static_cast<double>(g);
                best = std::max(best, s);
                total += s;
            }
            aggregated[j] = cfg.query_aggregation == QueryAggregation::max ? best : total / static_cast<double>(m);
        }
        sel.indices[kv] = top_k(aggregated, cfg.B_SA);
    }
    sel.budget_used = std::min(cfg.B_SA, t_k);
    return sel;
}

Selection channel_select(const Tensor& q, const Tensor& k_cache, const std::vector<std::vector<std::size_t>>& channels,
                         std::size_t budget, const HeadLayout& layout)
{
    const std::size_t t_q = q.dim(1);
    const std::size_t t_k = k_cache.dim(1);
    const std::size_t g = layout.n_q / layout.n_kv;
    Selection sel;
    sel.indices.resize(layout.n_kv);
    for (std::size_t kv = 0; kv < layout.n_kv; ++kv) {
        std::vector<double> scores(t_k, 0.0);
        for (std::size_t j = 0; j < t_k; ++j) {
            double total = 0.0;
            for (std::size_t hh = 0; hh < g; ++hh) {
                for (std::size_t i = 0; i < t_q; ++i) {
                    for (std::size_t c : channels[kv]) {
                        total += static_cast<double>(q.at(kv * g + hh, i, c)) * static_cast<double>(k_cache.at(kv, j, c));
                    }
                }
            }
            scores[j] = total / static_cast<double>(g * t_q);
        }
        sel.indices[kv] = top_k(scores, budget);
    }
    sel.budget_used = std::min(budget, t_k);
    return sel;
}

Selection sparq_select(const Tensor& q, const Tensor& k_cache, std::size_t d_l, std::size_t budget,
                       const HeadLayout& layout)
{
    const std::size_t t_q = q.dim(1);
    const std::size_t g = layout.n_q / layout.n_kv;
    std::vector<std::vector<std::size_t>> channels(layout.n_kv);
    for (std::size_t kv = 0; kv < layout.n_kv; ++kv) {
        std::vector<double> magnitude(layout.d, 0.0);
        for (std::size_t hh = 0; hh < g; ++hh) {
            for (std::size_t i = 0; i < t_q; ++i) {
                for (std::size_t c = 0; c < layout.d; ++c) {
                    magnitude[c] += std::fabs(static_cast<double>(q.at(kv * g + hh, i, c)));
                }
            }
        }
        channels[kv] = top_k(magnitude, d_l);
    }
    return channel_select(q, k_cache, channels, budget, layout);
}

Selection loki_select(const Tensor& q, const Tensor& k_cache, const Tensor& projection, std::size_t budget,
                      const HeadLayout& layout)
{
    const std::size_t t_q = q.dim(1);
    const std::size_t t_k = k_cache.dim(1);
    const std::size_t d = layout.d;
    const std::size_t d_l = projection.dim(1);
    const std::size_t g = layout.n_q / layout.n_kv;
    auto project = [&](const Tensor& x, std::size_t head, std::size_t i) {
        Vec out(d_l, 0.0);
        for (std::size_t c = 0; c < d_l; ++c) {
            for (std::size_t r = 0; r < d; ++r) {
                out[c] += static_cast<double>(x.at(head, i, r)) * static_cast<double>(projection.at(r, c));
            }
        }
        return out;
    };
    Selection sel;
    sel.indices.resize(layout.n_kv);
    for (std::size_t kv = 0; kv < layout.n_kv; ++kv) {
        std::vector<Vec> qp;
        for (std::size_t hh = 0; hh < g; ++hh) {
            for (std::size_t i = 0; i < t_q; ++i) {
                qp.push_back(project(q, kv * g + hh, i));
            }
        }
        std::vector<double> scores(t_k, 0.0);
        for (std::size_t j = 0; j < t_k; ++j) {
            const Vec kp = project(k_cache, kv, j);
            double total = 0.0;
            for (const auto& x : qp) {
                total += dot(x, kp);
            }
            scores[j] = total / static_cast<double>(qp.size());
        }
        sel.indices[kv] = top_k(scores, budget);
    }
    sel.budget_used = std::min(budget, t_k);
    return sel;
}

} // namespace quoka::oracle
