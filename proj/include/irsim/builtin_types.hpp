#pragma once

#include "irsim/runtime.hpp"

namespace irsim {

// panel, social, curated_feed, multigen.
TypeRegistry& register_builtin_types(TypeRegistry& registry);

}  // namespace irsim
