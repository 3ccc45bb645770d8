#include "msmlp/cli.hpp"

int main(int argc, char** argv) { return msmlp::cli_main(argc, argv); }
