#include "fatiguenet/cli.hpp"

int main(int argc, char** argv) { return fatiguenet::cli::run_command(argc, argv); }
