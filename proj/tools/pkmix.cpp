// Apache License, Version 2.0, refer to LICENSE.txt

#include <iostream>

#include "pkmix/cli.hpp"

int main(int argc, char** argv) { return pkmix::cli_main(argc, argv, std::cout, std::cerr); }
