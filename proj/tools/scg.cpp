#include "scg/cli.hpp"

int main(int argc, char** argv) { return scg::cli::run_command(argc, argv); }
