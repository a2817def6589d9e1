#include <iostream>

#include "cnalab/cli.hpp"

int main(int argc, char** argv) { return cnalab::run_cli(argc, argv, std::cout, std::cerr); }
