#include "binshield/cli.hpp"

int main(int argc, char** argv) { return binshield::run_cli(argc, argv); }
