#include "geoworld/cli.hpp"

int main(int argc, char** argv) { return geoworld::cli::run(argc, argv); }
