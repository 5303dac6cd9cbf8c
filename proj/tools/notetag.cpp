#include "notetag/cli.hpp"

int main(int argc, char** argv) { return notetag::run_cli(argc, argv); }
