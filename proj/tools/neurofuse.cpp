#include "cli.hpp"

int main(int argc, char** argv) { return neurofuse::cli::run(argc, argv); }
