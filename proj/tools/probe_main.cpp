#include <iostream>
#include <string>
#include <vector>

#include "latentprobe/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return latentprobe::run_cli(args, std::cout, std::cerr);
}
