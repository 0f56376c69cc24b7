#include "halluspan/cli.hpp"

int main(int argc, char** argv) { return halluspan::cli::main(argc, argv); }
