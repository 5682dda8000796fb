#include <iostream>
#include <string>
#include <vector>

#include "vldac/cli/expcli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return vldac::cli::expcli_main(args, std::cout, std::cerr);
}
