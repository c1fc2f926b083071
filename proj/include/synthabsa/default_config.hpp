#pragma once

#include <string_view>

namespace synthabsa::bundled {

// Contents of data/*.json, embedded at build time.
extern const std::string_view kAspectInventoryJson;
extern const std::string_view kNuanceSchemaJson;
extern const std::string_view kPromptStatesJson;

}  // namespace synthabsa::bundled
