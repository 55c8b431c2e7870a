#include "sdtest/cli.hpp"

int main(int argc, char** argv) { return sdtest::cli::run_cli(argc, argv); }
