#include "ssimadv/cli.hpp"

int main(int argc, char** argv) { return ssimadv::run_cli(argc, argv); }
