#include <iostream>

#include "gpufail/cli.hpp"

int main(int argc, char** argv) { return gpufail::cli::run_cli(argc, argv, std::cout, std::cerr); }
