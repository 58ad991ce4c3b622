#include <iostream>

#include "featnorm/cli.hpp"

int main(int argc, char** argv) { return featnorm::cli::run(argc, argv, std::cout, std::cerr); }
