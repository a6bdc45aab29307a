#include "alignedcal/cli.hpp"

int main(int argc, char** argv) { return alignedcal::cli::run_cli(argc, argv); }
