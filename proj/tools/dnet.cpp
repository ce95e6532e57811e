#include "dnet/cli.hpp"

int main(int argc, char** argv) { return dnet::cli::run(argc, argv); }
