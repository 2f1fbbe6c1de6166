#include <iostream>

#include "vitkit/cli.hpp"

int main(int argc, char** argv) {
  return vitkit::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
