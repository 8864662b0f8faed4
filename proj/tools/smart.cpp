#include "smart/cli.hpp"

int main(int argc, char** argv) { return smart::run_cli(argc, argv); }
