#include <iostream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "spherecorr/trainer.hpp"

int main(int argc, char** argv) {
  spherecorr::tune_allocator();
  std::vector<std::string> args(argv + 1, argv + argc);
  return spherecorr::cli::run(args, std::cout, std::cerr);
}
