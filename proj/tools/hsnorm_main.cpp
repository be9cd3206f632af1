#include "hsnorm/cli.hpp"

int main(int argc, char** argv) { return hsnorm::run_cli(argc, argv); }
