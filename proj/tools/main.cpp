#include <iostream>

#include "advarch/cli.hpp"

int main(int argc, char** argv) {
    return advarch::run_cli({argv + 1, argv + argc}, std::cout, std::cerr);
}
