#include <iostream>
#include <string>
#include <vector>

#include "p2c/cli.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  return p2c::cli::run(args, std::cout, std::cerr);
}
