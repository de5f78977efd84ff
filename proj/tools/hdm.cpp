#include "hdm/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return hdm::run_cli(argc, argv, std::cout, std::cerr); }
