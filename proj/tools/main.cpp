#include <iostream>

#include "cli.hpp"

int main(int argc, char** argv) { return wgmm::cli::run(argc, argv, std::cout, std::cerr); }
