#include "zonotrain/cli.hpp"

int main(int argc, char** argv) { return zonotrain::cli::run_cli(argc, argv); }
