#include "isogat/cli.hpp"

int main(int argc, char** argv) { return isogat::run_cli(argc, argv); }
