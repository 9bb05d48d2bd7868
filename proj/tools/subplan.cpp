#include <iostream>

#include "subplan/cli.hpp"

int main(int argc, char** argv) { return subplan::run_cli(argc, argv, std::cout, std::cerr); }
