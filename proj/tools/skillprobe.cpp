#include <iostream>

#include "skillprobe/cli.hpp"

int main(int argc, char** argv) {
  return skillprobe::cli::dispatch(argc, argv, std::cout, std::cerr);
}
