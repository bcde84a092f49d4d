#include "cli.hpp"

int main(int argc, char** argv) { return sardist::cli::main(argc, argv); }
