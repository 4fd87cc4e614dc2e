#include "expcast/harness/commands.hpp"

int main(int argc, char** argv) {
    return expcast::run_cli(argc, argv);
}
