#include "covsteer/cli.hpp"

int main(int argc, char** argv) { return covsteer::cli::run_cli(argc, argv); }
