#include "fairrelay/cli.hh"

int main(int argc, char** argv) { return fairrelay::cli_main(argc, argv); }
