#include <iostream>

#include "fan/cli.hpp"

int main(int argc, char** argv) {
  return fan::run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
