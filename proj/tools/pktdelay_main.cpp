#include <iostream>
#include <string>
#include <vector>

#include "pktdelay/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return pktdelay::cli::run(args, std::cout, std::cerr);
}
