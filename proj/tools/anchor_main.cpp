#include <iostream>

#include "anchor/cli.hpp"

int main(int argc, char** argv) {
  return anchor::cli::run({argv + 1, argv + argc}, std::cout, std::cerr);
}
