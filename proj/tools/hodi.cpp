#include "hodi/cli.hpp"

int main(int argc, char** argv)
{
    return hodi::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
