#include "quoka/invariants.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "quoka/eval.hpp"
#include "quoka/oracles.hpp"
#include "quoka/parallel.hpp"

namespace quoka {

namespace {

struct Outcome {
    bool ok = true;
    double error = 0.0;
    std::size_t checks = 1;
};

// Runs `one(i)` over instances and folds the outcomes in index order.
template <typename F>
InvariantResult run_instances(std::string name, std::size_t instances, std::uint64_t seed, std::size_t threads,
                              F&& one)
{
    std::vector<Outcome> outcomes(instances);
    parallel_for(instances, threads, [&](std::size_t i) { outcomes[i] = one(mix_seed(seed, i)); });
    InvariantResult r;
    r.name = std::move(name);
    for (std::size_t i = 0; i < instances; ++i) {
        r.checks += outcomes[i].checks;
        r.worst = std::max(r.worst, outcomes[i].error);
        if (!outcomes[i].ok) {
            ++r.failures;
            if (!r.failing_seed) {
                r.failing_seed = mix_seed(seed, i);
            }
        }
    }
    return r;
}

double max_abs_diff(const Tensor& a, const Tensor& b)
{
    double worst = 0.0;
    const auto x = a.data();
    const auto y = b.data();
    for (std::size_t i = 0; i < x.size(); ++i) {
        worst = std::max(worst, std::fabs(static_cast<double>(x[i]) - static_cast<double>(y[i])));
    }
    return worst;
}

std::vector<std::size_t> chunk_sizes(std::size_t T)
{
    std::vector<std::size_t> out{1, 2, 3, T};
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

double log_uniform(Rng& rng, double lo, double hi)
{
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return std::exp(std::log(lo) + u * (std::log(hi) - std::log(lo)));
}

struct SelectorInstance {
    HeadLayout layout;
    Tensor q;
    Tensor k;
    SelectorConfig cfg;
};

SelectorInstance random_selector_instance(std::uint64_t seed)
{
    Rng rng(seed);
    constexpr std::size_t kQueryHeads[] = {1, 2, 4, 8};
    SelectorInstance inst;
    inst.layout.n_q = kQueryHeads[uniform_below(rng, 4)];
    do {
        inst.layout.n_kv = kQueryHeads[uniform_below(rng, 4)];
    } while (inst.layout.n_q % inst.layout.n_kv != 0);
    inst.layout.d = 2 + uniform_below(rng, 31);
    const std::size_t t_q = 1 + uniform_below(rng, 32);
    const std::size_t t_k = 1 + uniform_below(rng, 64);
    const std::size_t budget = 1 + uniform_below(rng, t_k + 4);
    const std::size_t max_queries = 1 + uniform_below(rng, 16);
    inst.cfg = SelectorConfig::quoka(budget, max_queries);
    inst.q = Tensor({inst.layout.n_q, t_q, inst.layout.d}, gaussian_vector(rng, inst.layout.n_q * t_q * inst.layout.d));
    inst.k = Tensor({inst.layout.n_kv, t_k, inst.layout.d}, gaussian_vector(rng, inst.layout.n_kv * t_k * inst.layout.d));
    return inst;
}

} // namespace

InvariantResult check_chunked_equals_dense(std::size_t instances, std::uint64_t seed, double tol, std::size_t threads)
{
    return run_instances("chunked_equals_dense", instances, seed, threads, [&](std::uint64_t s) {
        const SmallInstance inst = gen_small_instance(s);
        const auto& [q, k, v] = inst.qkv;
        const Tensor dense = dense_attention(AttentionBatch{q, k, v, inst.layout, 0});
        Outcome o;
        o.checks = 0;
        for (std::size_t b : chunk_sizes(inst.T)) {
            const double err = max_abs_diff(dense, chunked_attention(q, k, v, inst.layout, b).output);
            o.error = std::max(o.error, err);
            o.ok = o.ok && err <= tol;
            ++o.checks;
        }
        return o;
    });
}

InvariantResult check_dense_matches_oracle(std::size_t instances, std::uint64_t seed, double tol, std::size_t threads)
{
    return run_instances("dense_matches_oracle", instances, seed, threads, [&](std::uint64_t s) {
        const SmallInstance inst = gen_small_instance(s);
        const auto& [q, k, v] = inst.qkv;
        const Tensor dense = dense_attention(AttentionBatch{q, k, v, inst.layout, 0});
        const auto ref = oracle::dense_attention(q, k, v, inst.layout, 0);
        Outcome o;
        const auto x = dense.data();
        for (std::size_t i = 0; i < x.size(); ++i) {
            o.error = std::max(o.error, std::fabs(static_cast<double>(x[i]) - ref[i]));
        }
        o.ok = o.error <= tol;
        return o;
    });
}

InvariantResult check_full_budget_identity(std::size_t instances, std::uint64_t seed, double tol, std::size_t threads)
{
    return run_instances("full_budget_identity", instances, seed, threads, [&](std::uint64_t s) {
        const SmallInstance inst = gen_small_instance(s);
        const Tensor dense = dense_attention(AttentionBatch{inst.qkv.q, inst.qkv.k, inst.qkv.v, inst.layout, 0});
        const TensorQkvStream stream({inst.qkv}, inst.layout);
        Outcome o;
        o.checks = 0;
        for (std::size_t b : chunk_sizes(inst.T)) {
            PrefillConfig cfg;
            cfg.B_CP = b;
            cfg.selector = QuokaSelector{SelectorConfig::quoka(inst.T, 16)};
            cfg.layout = inst.layout;
            cfg.seed = s;
            const double err = attention_error(dense, prefill(stream, cfg).outputs.front());
            o.error = std::max(o.error, err);
            o.ok = o.ok && err <= tol;
            ++o.checks;
        }
        return o;
    });
}

InvariantResult check_preaggregation_linearity(std::size_t draws, std::uint64_t seed, double tol)
{
    return run_instances("preaggregation_linearity", draws, seed, 1, [&](std::uint64_t s) {
        Rng rng(s);
        constexpr std::size_t kGroups[] = {1, 2, 4, 8};
        constexpr std::size_t kDims[] = {8, 16, 64, 128};
        const std::size_t g = kGroups[uniform_below(rng, 4)];
        const std::size_t d = kDims[uniform_below(rng, 4)];
        const std::size_t m = 1 + uniform_below(rng, 8);
        const HeadLayout layout{g, 1, d};
        const Tensor raw({g, m, d}, gaussian_vector(rng, g * m * d));
        std::vector<float> normalized(g * m * d);
        for (std::size_t h = 0; h < g; ++h) {
            l2_normalize_rows_into(raw.head(h), kDefaultEps, std::span<float>(normalized).subspan(h * m * d, m * d));
        }
        const Tensor q_norm({g, m, d}, normalized);
        const Tensor key = l2_normalize_rows(Tensor({1, d}, gaussian_vector(rng, d)));
        const Tensor q_bar = preaggregate_queries(q_norm, layout);
        std::vector<float> dot_of_mean(m);
        matmul_into(q_bar.head(0), key.as_matrix(), dot_of_mean);
        Outcome o;
        for (std::size_t i = 0; i < m; ++i) {
            double mean_of_dots = 0.0;
            for (std::size_t h = 0; h < g; ++h) {
                double dot = 0.0;
                for (std::size_t c = 0; c < d; ++c) {
                    dot += static_cast<double>(q_norm.at(h, i, c)) * static_cast<double>(key.at(0, c));
                }
                mean_of_dots += dot;
            }
            mean_of_dots /= static_cast<double>(g);
            o.error = std::max(o.error, std::fabs(static_cast<double>(dot_of_mean[i]) - mean_of_dots));
        }
        o.ok = o.error <= tol;
        return o;
    });
}

InvariantResult check_oracle_equivalence(std::size_t instances, std::uint64_t seed, std::size_t threads)
{
    return run_instances("oracle_equivalence", instances, seed, threads, [&](std::uint64_t s) {
        const SelectorInstance inst = random_selector_instance(s);
        const Selection got = quoka_select(inst.q, inst.k, inst.cfg, inst.layout);
        const Selection want = oracle::select(inst.q, inst.k, inst.cfg, inst.layout, 0);
        Outcome o;
        o.ok = got.indices == want.indices && got.budget_used == want.budget_used;
        o.error = o.ok ? 0.0 : 1.0;
        return o;
    });
}

InvariantResult check_selection_scale_invariance(std::size_t instances, std::uint64_t seed, std::size_t threads)
{
    return run_instances("selection_scale_invariance", instances, seed, threads, [&](std::uint64_t s) {
        const SelectorInstance inst = random_selector_instance(s);
        Rng rng(mix_seed(s, 0x7363616c65));
        const Selection base = quoka_select(inst.q, inst.k, inst.cfg, inst.layout);

        Tensor k = inst.k;
        const std::size_t d = inst.layout.d;
        for (std::size_t row = 0; row < k.size() / d; ++row) {
            const auto c = static_cast<float>(log_uniform(rng, 0.01, 100.0));
            for (std::size_t j = 0; j < d; ++j) {
                k.data()[row * d + j] *= c;
            }
        }
        Tensor q = inst.q;
        const bool per_row = q.dim(1) <= inst.cfg.N_Q;
        const auto shared = static_cast<float>(log_uniform(rng, 0.01, 100.0));
        for (std::size_t row = 0; row < q.size() / d; ++row) {
            const float c = per_row ? static_cast<float>(log_uniform(rng, 0.01, 100.0)) : shared;
            for (std::size_t j = 0; j < d; ++j) {
                q.data()[row * d + j] *= c;
            }
        }
        Outcome o;
        o.checks = 2;
        const bool keys_ok = quoka_select(inst.q, k, inst.cfg, inst.layout).indices == base.indices;
        const bool queries_ok = quoka_select(q, inst.k, inst.cfg, inst.layout).indices == base.indices;
        o.ok = keys_ok && queries_ok;
        o.error = (keys_ok ? 0.0 : 1.0) + (queries_ok ? 0.0 : 1.0);
        return o;
    });
}

InvariantResult check_theorem(std::size_t trials, std::span<const std::size_t> dims, std::uint64_t seed, double tol)
{
    InvariantResult r;
    r.name = "theorem_bound";
    std::ostringstream detail;
    r.worst = -INFINITY;
    for (std::size_t d : dims) {
        const TheoremReport rep = check_theorem_bound(trials, d, seed, tol);
        r.checks += rep.trials;
        r.failures += rep.violations;
        r.worst = std::max(r.worst, rep.max_excess);
        if (rep.violations > 0 && !r.failing_seed) {
            r.failing_seed = seed;
        }
        detail << "d=" << d << ": " << rep.violations << " violations; ";

        Rng rng(mix_seed(seed, d, 0x62));
        const TheoremSample edge = theorem_trial(-1.0, 1.0, d, rng);
        ++r.checks;
        if (edge.bound != -1.0 || std::fabs(edge.cosine + 1.0) > tol) {
            ++r.failures;
            detail << "boundary case alpha=-1, beta=1 gave cosine " << edge.cosine << "; ";
        }
    }
    ++r.checks;
    if (theorem_bound(-0.5, 0.5) != 0.5) {
        ++r.failures;
        detail << "bound(-0.5, 0.5) != 0.5; ";
    }
    r.detail = detail.str();
    return r;
}

InvariantResult check_fixture(const std::filesystem::path& manifest, double tol)
{
    InvariantResult r;
    r.name = "fixture:" + manifest.filename().string();
    const TensorQkvStream stream = load_fixture_stream(manifest);
    PrefillConfig cfg;
    cfg.layout = stream.layout();
    cfg.layers = stream.layers();
    cfg.B_CP = std::max<std::size_t>(1, stream.length() / 4);
    cfg.selector = QuokaSelector{SelectorConfig::quoka(stream.length(), 16)};
    const auto result = prefill(stream, cfg);
    for (std::size_t l = 0; l < stream.layers(); ++l) {
        const auto& c = stream.layer(l);
        const Tensor dense = dense_attention(AttentionBatch{c.q, c.k, c.v, cfg.layout, 0});
        const double err = attention_error(dense, result.outputs[l]);
        ++r.checks;
        r.worst = std::max(r.worst, err);
        if (err > tol) {
            ++r.failures;
        }
    }
    return r;
}

} // namespace quoka
