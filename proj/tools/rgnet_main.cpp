// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "rgnet/cli.hpp"

int main(int argc, char** argv) { return rgnet::run_cli(argc, argv, std::cout, std::cerr); }
