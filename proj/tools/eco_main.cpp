#include <iostream>
#include <string>
#include <vector>

#include "eco/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return eco::cli::run(args, std::cout, std::cerr);
}
