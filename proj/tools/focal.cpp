#include <iostream>

#include "focal/cli.hpp"

int main(int argc, char** argv) { return focal::cli::main(argc, argv, std::cin, std::cout, std::cerr); }
