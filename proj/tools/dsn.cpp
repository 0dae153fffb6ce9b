#include <string>
#include <vector>

#include "dsn/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return dsn::cli::run_cli(std::move(args));
}
