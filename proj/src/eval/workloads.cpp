#include <algorithm>
#include <cmath>
#include <string>

#include "quoka/eval.hpp"

namespace quoka {

namespace {

using Vec = std::vector<double>;

double dot(const Vec& a, const Vec& b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

Vec gaussian_d(Rng& rng, std::size_t d)
{
    std::normal_distribution<double> normal(0.0, 1.0);
    Vec v(d);
    for (double& x : v) {
        x = normal(rng);
    }
    return v;
}

void remove_components(Vec& v, const std::vector<Vec>& basis)
{
    for (const auto& b : basis) {
        const double c = dot(v, b);
        for (std::size_t i = 0; i < v.size(); ++i) {
            v[i] -= c * b[i];
        }
    }
}

// Unit vector orthogonal to every row of `basis`.
Vec random_orthogonal_unit(Rng& rng, std::size_t d, const std::vector<Vec>& basis)
{
    for (;;) {
        Vec v = gaussian_d(rng, d);
        remove_components(v, basis);
        remove_components(v, basis);
        const double n = std::sqrt(dot(v, v));
        if (n > 1e-6) {
            for (double& x : v) {
                x /= n;
            }
            return v;
        }
    }
}

} // namespace

QkvChunk gen_random_qkv(const HeadLayout& layout, std::size_t T, std::uint64_t seed)
{
    layout.validate();
    if (T < 1) {
        throw ValidationError("gen_random_qkv: T must be >= 1");
    }
    Rng rng(seed);
    auto q = gaussian_vector(rng, layout.n_q * T * layout.d);
    auto k = gaussian_vector(rng, layout.n_kv * T * layout.d);
    auto v = gaussian_vector(rng, layout.n_kv * T * layout.d);
    return {Tensor({layout.n_q, T, layout.d}, std::move(q)), Tensor({layout.n_kv, T, layout.d}, std::move(k)),
            Tensor({layout.n_kv, T, layout.d}, std::move(v))};
}

TensorQkvStream gen_random_stream(const HeadLayout& layout, std::size_t T, std::size_t layers, std::uint64_t seed)
{
    std::vector<QkvChunk> chunks;
    for (std::size_t l = 0; l < layers; ++l) {
        chunks.push_back(gen_random_qkv(layout, T, mix_seed(seed, l)));
    }
    return TensorQkvStream(std::move(chunks), layout);
}

SmallInstance gen_small_instance(std::uint64_t seed, std::size_t max_T)
{
    if (max_T < 1) {
        throw ValidationError("gen_small_instance: max_T must be >= 1");
    }
    Rng rng(mix_seed(seed, 0x736d616c6c));
    constexpr std::size_t kQueryHeads[] = {4, 8};
    constexpr std::size_t kKvHeads[] = {1, 2, 4};
    constexpr std::size_t kDims[] = {8, 16};
    SmallInstance inst;
    inst.layout.n_q = kQueryHeads[uniform_below(rng, 2)];
    inst.layout.n_kv = kKvHeads[uniform_below(rng, 3)];
    inst.layout.d = kDims[uniform_below(rng, 2)];
    inst.T = 1 + uniform_below(rng, max_T);
    inst.qkv = gen_random_qkv(inst.layout, inst.T, rng());
    return inst;
}

void NeedleWorkload::validate(const HeadLayout& layout) const
{
    layout.validate();
    if (T < 1) {
        throw SpecError("needle workload: T must be >= 1");
    }
    if (final_chunk < 1 || final_chunk > T) {
        throw SpecError("needle workload: final_chunk must be in [1, T]");
    }
    if (!(alignment > 0.0f && alignment <= 1.0f)) {
        throw SpecError("needle workload: alignment must be in (0, 1]");
    }
    if (!(noise_scale >= 0.0f) || !(query_jitter >= 0.0f)) {
        throw SpecError("needle workload: noise_scale and query_jitter must be >= 0");
    }
    if (planted_per_needle < 1) {
        throw SpecError("needle workload: planted_per_needle must be >= 1");
    }
    if (needle_positions.size() + 1 > layout.d) {
        throw SpecError("needle workload: " + std::to_string(needle_positions.size()) +
                        " needles need more orthogonal directions than d=" + std::to_string(layout.d) +
                        " provides (one is reserved for the query mean)");
    }
    if (needle_positions.size() * planted_per_needle > final_chunk) {
        throw SpecError("needle workload: not enough final-chunk positions for the planted queries");
    }
    auto sorted = needle_positions;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw SpecError("needle workload: needle positions must be distinct");
    }
    for (std::size_t p : sorted) {
        if (p >= T - final_chunk) {
            throw SpecError("needle workload: needle position " + std::to_string(p) +
                            " is not before the final chunk");
        }
    }
}

NeedleInstance gen_needle_workload(const NeedleWorkload& spec, const HeadLayout& layout)
{
    spec.validate(layout);
    const std::size_t T = spec.T;
    const std::size_t d = layout.d;
    const std::size_t g = layout.group_size();
    const std::size_t n_needles = spec.needle_positions.size();
    const double a = spec.alignment;
    const double b = std::sqrt(std::max(0.0, 1.0 - a * a));
    const double s = 2.0 * std::sqrt(static_cast<double>(d)) * std::log(static_cast<double>(std::max<std::size_t>(T, 2))) / a;

    Rng rng(mix_seed(spec.seed, 0x6e656564));
    NeedleInstance inst;
    inst.needles = spec.needle_positions;
    std::sort(inst.needles.begin(), inst.needles.end());
    inst.query_scale = static_cast<float>(s);

    // Planted query positions, shared across heads, in random needle order.
    const std::size_t chunk_start = T - spec.final_chunk;
    auto planted = sample_without_replacement(rng, spec.final_chunk, n_needles * spec.planted_per_needle);
    for (std::size_t i = planted.size(); i > 1; --i) {
        std::swap(planted[i - 1], planted[uniform_below(rng, i)]);
    }
    for (auto& p : planted) {
        p += chunk_start;
    }
    inst.planted_queries = planted;

    std::vector<float> q(layout.n_q * T * d);
    std::vector<float> k(layout.n_kv * T * d);
    std::vector<std::ptrdiff_t> needle_of(T, -1);
    for (std::size_t n = 0; n < n_needles; ++n) {
        needle_of[inst.needles[n]] = static_cast<std::ptrdiff_t>(n);
    }
    std::vector<std::ptrdiff_t> planted_needle(T, -1);
    for (std::size_t i = 0; i < planted.size(); ++i) {
        planted_needle[planted[i]] = static_cast<std::ptrdiff_t>(i / spec.planted_per_needle);
    }

    for (std::size_t kv = 0; kv < layout.n_kv; ++kv) {
        std::vector<Vec> dirs;
        for (std::size_t n = 0; n < n_needles; ++n) {
            dirs.push_back(random_orthogonal_unit(rng, d, dirs));
        }
        const Vec mu = random_orthogonal_unit(rng, d, dirs);

        for (std::size_t j = 0; j < T; ++j) {
            float* row = k.data() + (kv * T + j) * d;
            if (needle_of[j] >= 0) {
                const Vec& u = dirs[static_cast<std::size_t>(needle_of[j])];
                for (std::size_t c = 0; c < d; ++c) {
                    row[c] = static_cast<float>(u[c]);
                }
                continue;
            }
            Vec noise = gaussian_d(rng, d);
            for (double& x : noise) {
                x *= spec.noise_scale;
            }
            remove_components(noise, dirs);
            for (std::size_t c = 0; c < d; ++c) {
                row[c] = static_cast<float>(noise[c]);
            }
        }

        for (std::size_t gh = 0; gh < g; ++gh) {
            const std::size_t h = kv * g + gh;
            for (std::size_t i = 0; i < T; ++i) {
                float* row = q.data() + (h * T + i) * d;
                if (planted_needle[i] >= 0) {
                    const Vec& u = dirs[static_cast<std::size_t>(planted_needle[i])];
                    for (std::size_t c = 0; c < d; ++c) {
                        row[c] = static_cast<float>(s * (a * u[c] + b * mu[c]));
                    }
                    continue;
                }
                const Vec r = random_orthogonal_unit(rng, d, {});
                for (std::size_t c = 0; c < d; ++c) {
                    row[c] = static_cast<float>(s * (mu[c] + spec.query_jitter * r[c]));
                }
            }
        }
    }
    auto v = gaussian_vector(rng, layout.n_kv * T * d);
    inst.qkv = {Tensor({layout.n_q, T, d}, std::move(q)), Tensor({layout.n_kv, T, d}, std::move(k)),
                Tensor({layout.n_kv, T, d}, std::move(v))};
    return inst;
}

NeedleWorkload needle_family(std::size_t T, std::size_t needles, float alignment, float noise_scale,
                             std::uint64_t seed, std::size_t final_chunk)
{
    if (final_chunk >= T) {
        throw SpecError("needle family: final_chunk must leave at least one cached position");
    }
    if (needles > T - final_chunk) {
        throw SpecError("needle family: more needles than cached positions");
    }
    Rng rng(mix_seed(seed, 0x6e66));
    NeedleWorkload w;
    w.T = T;
    w.needle_positions = sample_without_replacement(rng, T - final_chunk, needles);
    w.alignment = alignment;
    w.noise_scale = noise_scale;
    w.seed = seed;
    w.final_chunk = final_chunk;
    return w;
}

} // namespace quoka
