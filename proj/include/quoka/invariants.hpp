#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>

namespace quoka {

// Outcome of one property suite. `worst` is the largest observed error (or
// mismatch count) and `failing_seed` reproduces the first failure.
struct InvariantResult {
    std::string name;
    std::size_t checks = 0;
    std::size_t failures = 0;
    double worst = 0.0;
    std::optional<std::uint64_t> failing_seed;
    std::string detail;

    bool passed() const { return checks > 0 && failures == 0; }
};

// Instance seeds are mix_seed(seed, i); every suite is deterministic in its
// arguments regardless of `threads`.

// Chunked attention with no selection vs dense, B_CP in {1, 2, 3, T}, max abs.
InvariantResult check_chunked_equals_dense(std::size_t instances, std::uint64_t seed, double tol, std::size_t threads);

// Float dense attention vs the 64-bit oracle, max abs.
InvariantResult check_dense_matches_oracle(std::size_t instances, std::uint64_t seed, double tol, std::size_t threads);

// Chunked prefill with QuoKA at B_SA = T vs dense, relative Frobenius error.
InvariantResult check_full_budget_identity(std::size_t instances, std::uint64_t seed, double tol, std::size_t threads);

// |dot(mean of normalized group queries, k) - mean of dots| on random draws.
InvariantResult check_preaggregation_linearity(std::size_t draws, std::uint64_t seed, double tol);

// quoka_select vs the 64-bit pipeline oracle, identical index sets, t_k <= 64.
InvariantResult check_oracle_equivalence(std::size_t instances, std::uint64_t seed, std::size_t threads);

// Positive rescaling of cached key rows and of query rows leaves the QuoKA
// Selection unchanged. Per-row query scales are applied when no query
// sub-selection happens (t_q <= N_Q); otherwise one scale is shared by all
// queries, since sub-selection ranks queries against their raw mean.
InvariantResult check_selection_scale_invariance(std::size_t instances, std::uint64_t seed, std::size_t threads);

// Zero Monte-Carlo violations for each d, plus the alpha = -1, beta = 1
// boundary case.
InvariantResult check_theorem(std::size_t trials, std::span<const std::size_t> dims, std::uint64_t seed, double tol);

// Full-budget chunked prefill of a fixture stream vs dense, relative Frobenius.
InvariantResult check_fixture(const std::filesystem::path& manifest, double tol);

} // namespace quoka
