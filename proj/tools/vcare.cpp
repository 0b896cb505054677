#include <iostream>

#include "vcare/cli.hpp"

int main(int argc, char** argv) { return vcare::cli::run_cli(argc, argv, std::cout, std::cerr); }
