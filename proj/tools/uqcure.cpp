#include "uqcure/cli.hpp"

int main(int argc, char** argv) { return uqcure::cli::run(argc, argv); }
