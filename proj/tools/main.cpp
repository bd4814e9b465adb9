#include <iostream>
#include <string>
#include <vector>

#include "seq2set/cli.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  return seq2set::cli::run(args, std::cout, std::cerr);
}
