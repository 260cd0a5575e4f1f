#include "capinv/cli.hpp"

int main(int argc, char** argv) {
    return capinv::cli_main(std::vector<std::string>(argv + 1, argv + argc));
}
