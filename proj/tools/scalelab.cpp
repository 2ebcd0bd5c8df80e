#include "scalelab/cli.hpp"

int main(int argc, char** argv) { return scl::run_cli(argc, argv); }
