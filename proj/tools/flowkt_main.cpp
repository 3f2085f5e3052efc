#include "fmkt/harness/cli.hpp"

int main(int argc, char** argv) { return fmkt::harness::cli(argc, argv); }
