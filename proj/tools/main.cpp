#include <iostream>

#include "stormloss/cli.hpp"

int main(int argc, char** argv) { return stormloss::run_cli(argc, argv, std::cout, std::cerr); }
