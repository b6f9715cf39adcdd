#include "qes/cli.hpp"

int main(int argc, char** argv) { return qes::cli_main(argc, argv); }
