#pragma once

#include <string>
#include <vector>

#include "stpanel/model_spec.hpp"

namespace stpanel {

ModelSpec spec_from_json(const std::string& text);
ModelSpec load_spec(const std::string& preset_or_path); // preset name or .json file

std::vector<std::string> preset_names();
bool is_preset(const std::string& name);

} // namespace stpanel
