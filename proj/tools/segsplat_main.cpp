#include <iostream>

#include "segsplat/cli.hpp"

int main(int argc, char** argv) {
  return segsplat::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
