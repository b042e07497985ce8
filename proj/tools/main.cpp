#include <iostream>
#include <string>
#include <vector>

#include "dsrefine/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return dsrefine::execute(args, std::cout, std::cerr);
}
