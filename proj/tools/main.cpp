#include "fisherflow/cli.hpp"

int main(int argc, char** argv) { return fisherflow::cli_main(argc, argv); }
