#include <iostream>

#include "piie/cli.hpp"

int main(int argc, char** argv) { return piie::run_cli(argc, argv, std::cout, std::cerr); }
