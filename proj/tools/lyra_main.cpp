#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "lyra/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    return lyra::run_cli(std::move(args));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
