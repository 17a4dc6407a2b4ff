#include "b2b/cli.hpp"

int main(int argc, char** argv) { return b2b::cli_dispatch(argc, argv); }
