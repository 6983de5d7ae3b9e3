#include <iostream>
#include <string>
#include <vector>

#include "tstr/pipeline.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return tstr::cli::run(args, std::cout, std::cerr);
}
