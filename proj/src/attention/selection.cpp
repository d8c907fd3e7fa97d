#include "quoka/selection.hpp"

#include <numeric>
#include <string>

#include "quoka/errors.hpp"

namespace quoka {

Selection Selection::full(std::size_t n_kv, std::size_t cached)
{
    Selection s;
    s.indices.assign(n_kv, std::vector<std::size_t>(cached));
    for (auto& list : s.indices) {
        std::iota(list.begin(), list.end(), std::size_t{0});
    }
    s.budget_used = cached;
    return s;
}

void Selection::validate(std::size_t cached) const
{
    for (std::size_t h = 0; h < indices.size(); ++h) {
        const auto& list = indices[h];
        for (std::size_t j = 0; j < list.size(); ++j) {
            if (list[j] >= cached) {
                throw ValidationError("selection: head " + std::to_string(h) + " index " +
                                      std::to_string(list[j]) + " >= cached length " + std::to_string(cached));
            }
            if (j > 0 && list[j] <= list[j - 1]) {
                throw ValidationError("selection: head " + std::to_string(h) + " not strictly increasing");
            }
        }
    }
}

} // namespace quoka
