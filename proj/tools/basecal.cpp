#include <iostream>
#include <string>
#include <vector>

#include "basecal/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return basecal::cli::run(args, std::cout, std::cerr);
}
