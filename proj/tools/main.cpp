#include <iostream>

#include "shipem/cli.hpp"

int main(int argc, char** argv) { return shipem::cli::cli_main(argc, argv, std::cout, std::cerr); }
