#include <iostream>
#include <string>
#include <vector>

#include "ubr/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return ubr::cli::run(args, std::cout, std::cerr);
}
