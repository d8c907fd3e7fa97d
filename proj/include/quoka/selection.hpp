#pragma once

#include <cstddef>
#include <vector>

namespace quoka {

// Per-kv-head retained cache positions: sorted, unique, each list of length
// min(budget, cached length).
struct Selection {
    std::vector<std::vector<std::size_t>> indices;
    std::size_t budget_used = 0;

    static Selection full(std::size_t n_kv, std::size_t cached);

    // Throws ValidationError if lists are unsorted, duplicated or out of range.
    void validate(std::size_t cached) const;

    bool operator==(const Selection&) const = default;
};

} // namespace quoka
