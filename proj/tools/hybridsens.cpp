#include <iostream>

#include "hybridsens/cli.hpp"

int main(int argc, char** argv) {
  return hybridsens::run_cli(argc, argv, std::cout, std::cerr);
}
