#include "vatt/cli.hpp"

int main(int argc, char** argv) { return vatt::run_cli(argc, argv); }
