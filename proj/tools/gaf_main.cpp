#include <iostream>
#include <string>
#include <vector>

#include "gaf/cli.hpp"

int main(int argc, char** argv) {
    gaf::tune_allocator();
    std::vector<std::string> args(argv + 1, argv + argc);
    return gaf::run_command(args, std::cout, std::cerr);
}
