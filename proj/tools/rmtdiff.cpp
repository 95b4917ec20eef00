#include "rmtdiff/cli.hpp"

int main(int argc, char** argv) { return rmtdiff::run_cli(argc, argv); }
