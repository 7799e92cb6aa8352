#include <iostream>
#include <string>
#include <vector>

#include "nonunion/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return nonunion::dispatch(args, std::cout, std::cerr);
}
