#include "bcrown/cli.hpp"

#include "acceptance.hpp"

int main(int argc, char** argv) {
    return bcrown::cli::main(argc, argv, bcrown::acceptance::run_all);
}
