#include "photonstat/cli.hpp"

int main(int argc, char** argv) { return photonstat::cli::run(argc, argv); }
