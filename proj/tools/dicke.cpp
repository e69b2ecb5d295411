// dicke.cpp - command-line entry point

#include "dicke/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return dicke::main_entry(argc, argv, std::cout, std::cerr); }
