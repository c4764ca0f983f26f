#include "thinar/cli.hpp"

int main(int argc, char** argv) { return thinar::run_subcommand(argc, argv); }
