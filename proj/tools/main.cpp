#include <iostream>

#include "ctxdesc/cli.hpp"

int main(int argc, char** argv) {
    return ctxdesc::cli_main(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
