#include "gaslt/cli.hpp"

int main(int argc, char** argv) { return gaslt::cli::run_cli(argc, argv); }
