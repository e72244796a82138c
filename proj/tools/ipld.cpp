#include "ipld/cli.hpp"

int main(int argc, char** argv) { return ipld::cli::run(argc, argv); }
