#include <iostream>
#include <string>
#include <vector>

#include "rfmag/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return rfmag::cli::run_cli(args, std::cout, std::cerr);
}
