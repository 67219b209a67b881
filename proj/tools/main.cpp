#include <iostream>

#include "topoaug/cli.hpp"

int main(int argc, char** argv) { return topoaug::run_cli(argc, argv, std::cout, std::cerr); }
