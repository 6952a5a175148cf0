#include <vector>

#include "ganpr/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return ganpr::cli::run_cli(args);
}
