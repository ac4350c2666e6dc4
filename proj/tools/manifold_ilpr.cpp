#include <iostream>

#include "manifold_ilpr/cli.hpp"

int main(int argc, char** argv) { return milpr::cli::run(argc, argv, std::cout, std::cerr); }
