#include "cnv/harness.hpp"

int main(int argc, char** argv) { return cnv::cli_main(argc, argv); }
