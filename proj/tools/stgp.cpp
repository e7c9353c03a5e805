#include "stgp/cli.hpp"

int main(int argc, char **argv) { return stgp::cli::run(argc, argv); }
