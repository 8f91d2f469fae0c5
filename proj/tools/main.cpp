#include <iostream>

#include "dtvnet/harness.hpp"

int main(int argc, char** argv) { return dtvnet::run_cli(argc, argv, std::cout, std::cerr); }
