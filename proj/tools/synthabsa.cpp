#include <iostream>
#include <string>
#include <vector>

#include "synthabsa/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return synthabsa::dispatch(args, std::cout, std::cerr);
}
