#include <iostream>

#include "drlra/cli.hpp"

int main(int argc, char** argv) {
  return drlra::harness::run_cli(argc, argv, std::cout, std::cerr);
}
