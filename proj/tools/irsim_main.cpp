#include <iostream>

#include "irsim/builtin_types.hpp"
#include "irsim/cli.hpp"

int main(int argc, char** argv) {
  irsim::TypeRegistry registry;
  irsim::register_builtin_types(registry);
  return irsim::run_cli({argv, argv + argc}, registry, std::cout, std::cerr);
}
