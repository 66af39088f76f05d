#include "wpglab/harness/cli.hpp"

int main(int argc, char** argv) { return wpglab::run_cli(argc, argv); }
