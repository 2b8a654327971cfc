#include "spindiff/cli.hpp"

int main(int argc, char** argv) { return spindiff::cli::run_cli(argc, argv); }
