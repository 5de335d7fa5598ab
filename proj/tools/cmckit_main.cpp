#include "cmckit/cli.hpp"

int main(int argc, char** argv) { return cmckit::run_cli(argc, argv); }
