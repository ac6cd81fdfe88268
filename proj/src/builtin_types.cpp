#include "irsim/builtin_types.hpp"

#include "irsim/curated_feed.hpp"
#include "irsim/multigen.hpp"
#include "irsim/panel.hpp"
#include "irsim/social.hpp"

namespace irsim {

TypeRegistry& register_builtin_types(TypeRegistry& registry) {
  panel::register_type(registry);
  social::register_type(registry);
  feed::register_type(registry);
  multigen::register_type(registry);
  return registry;
}

}  // namespace irsim
