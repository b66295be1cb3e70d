// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "mxfp4/cli.hpp"

int main(int argc, char** argv) {
    return mxfp4::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
