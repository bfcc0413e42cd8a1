#include "sreg/cli.hpp"

int main(int argc, char** argv) { return sreg::cli::run_cli(argc, argv); }
