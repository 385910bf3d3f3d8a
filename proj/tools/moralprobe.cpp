#include "moralprobe/cli.hpp"

int main(int argc, char** argv) { return moralprobe::cli::main(argc, argv); }
