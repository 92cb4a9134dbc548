#include <iostream>

#include "adaor/cli.hpp"

int main(int argc, char** argv) { return adaor::cli::run(argc, argv, std::cout, std::cerr); }
