#include <iostream>

#include "forkcast/cli.hpp"

int main(int argc, char** argv)
{
    return forkcast::cli::run(argc, argv, std::cout, std::cerr);
}
