#include "siad/cli_io.hpp"

int main(int argc, char** argv) { return siad::run_cli(argc, argv); }
