#include <iostream>

#include "alacpd/cli.hpp"

int main(int argc, char** argv) { return alacpd::cli::run(argc, argv, std::cout, std::cerr); }
