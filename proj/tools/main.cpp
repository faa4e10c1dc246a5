#include "reviewguard/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return reviewguard::run_cli(argc, argv, std::cout, std::cerr); }
