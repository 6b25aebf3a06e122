#include <iostream>

#include "hsde_cli/cli.hpp"

int main(int argc, char** argv) { return hsde::cli::run(argc, argv, std::cout, std::cerr); }
