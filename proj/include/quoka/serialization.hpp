#pragma once

#include "json.hpp"

#include "quoka/attention.hpp"
#include "quoka/prefill.hpp"
#include "quoka/selectors.hpp"

namespace quoka {

using json = nlohmann::json;

// Each parser rejects unknown keys with ConfigError. Missing keys keep their
// defaults.
json to_json(const HeadLayout& layout);
HeadLayout head_layout_from_json(const json& j);

json to_json(const SelectorConfig& cfg);
SelectorConfig selector_config_from_json(const json& j);

// A SelectorConfig object, or a tagged baseline object
// {"variant": "dense"|"quoka"|"sparq"|"loki"|"less_is_more", ...}.
json to_json(const SelectorSpec& spec);
SelectorSpec selector_spec_from_json(const json& j);

json to_json(const PrefillConfig& cfg);
PrefillConfig prefill_config_from_json(const json& j);

// Throws ConfigError naming the first key of `j` outside `allowed`.
void require_known_keys(const json& j, std::initializer_list<const char*> allowed, const char* where);

} // namespace quoka
