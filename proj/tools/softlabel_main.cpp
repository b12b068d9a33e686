#include <iostream>
#include <string>
#include <vector>

#include "softlabel/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return softlabel::dispatch(args, std::cout, std::cerr);
}
