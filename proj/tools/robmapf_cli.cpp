#include "robmapf/cli.hpp"

int main(int argc, char** argv) { return robmapf::cli::main(argc, argv); }
