#include <iostream>

#include "ser/commands.hpp"

int main(int argc, char** argv)
{
    return ser::run_cli(argc, argv, std::cout, std::cerr);
}
