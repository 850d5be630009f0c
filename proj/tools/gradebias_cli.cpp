#include "gradebias/cli.hpp"

int main(int argc, char** argv) { return gradebias::cli::run(argc, argv); }
