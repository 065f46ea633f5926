#include <string>
#include <vector>

#include "nbm/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return nbm::run_cli(args);
}
