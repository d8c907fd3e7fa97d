#include <cmath>
#include <random>

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

// Uniform in [0, 1) from the top 53 bits.
double unit_interval(Rng& rng)
{
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

Vec random_unit(Rng& rng, std::size_t d, const Vec* orthogonal_to)
{
    std::normal_distribution<double> normal(0.0, 1.0);
    for (;;) {
        Vec v(d);
        for (double& x : v) {
            x = normal(rng);
        }
        if (orthogonal_to != nullptr) {
            for (int pass = 0; pass < 2; ++pass) {
                const double c = dot(v, *orthogonal_to);
                for (std::size_t i = 0; i < d; ++i) {
                    v[i] -= c * (*orthogonal_to)[i];
                }
            }
        }
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

double theorem_bound(double alpha, double beta)
{
    return 1.0 + alpha * beta - 0.5 * alpha * alpha - 0.5 * beta * beta;
}

TheoremSample theorem_trial(double alpha, double beta, std::size_t d, Rng& rng)
{
    if (d < 2) {
        throw ValidationError("theorem_trial: d must be >= 2");
    }
    const Vec k = random_unit(rng, d, nullptr);
    const Vec r = random_unit(rng, d, &k);
    const Vec r2 = random_unit(rng, d, &k);
    // M_Q only matters through its direction; give it an arbitrary length.
    const double length = 0.5 + 1.5 * unit_interval(rng);
    const double sa = std::sqrt(std::max(0.0, 1.0 - alpha * alpha));
    const double sb = std::sqrt(std::max(0.0, 1.0 - beta * beta));
    Vec m(d);
    Vec q(d);
    for (std::size_t i = 0; i < d; ++i) {
        m[i] = length * (alpha * k[i] + sa * r[i]);
        q[i] = beta * k[i] + sb * r2[i];
    }
    TheoremSample s;
    s.alpha = alpha;
    s.beta = beta;
    s.cosine = dot(m, q) / (std::sqrt(dot(m, m)) * std::sqrt(dot(q, q)));
    s.bound = theorem_bound(alpha, beta);
    return s;
}

TheoremReport check_theorem_bound(std::size_t trials, std::size_t d, std::uint64_t seed, double tol)
{
    if (d < 2) {
        throw ValidationError("check_theorem_bound: d must be >= 2");
    }
    if (trials < 1) {
        throw ValidationError("check_theorem_bound: trials must be >= 1");
    }
    constexpr std::size_t kKeptSamples = 8;
    constexpr std::size_t kKeptViolations = 64;
    Rng rng(mix_seed(seed, d));
    TheoremReport report;
    report.trials = trials;
    report.d = d;
    report.max_excess = -INFINITY;
    for (std::size_t t = 0; t < trials; ++t) {
        const double alpha = -1.0 + unit_interval(rng);   // [-1, 0)
        const double beta = 1.0 - unit_interval(rng);     // (0, 1]
        const TheoremSample s = theorem_trial(alpha, beta, d, rng);
        const double excess = s.cosine - s.bound;
        report.max_excess = std::max(report.max_excess, excess);
        const bool violated = excess > tol;
        if (violated) {
            ++report.violations;
        }
        if (t < kKeptSamples || (violated && report.samples.size() < kKeptSamples + kKeptViolations)) {
            report.samples.push_back(s);
        }
    }
    return report;
}

} // namespace quoka
