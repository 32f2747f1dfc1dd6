#include "dcosim/cli.hpp"

int main(int argc, char** argv)
{
    return dcosim::cli::run_command(argc, argv);
}
