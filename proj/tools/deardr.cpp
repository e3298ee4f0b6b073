#include "deardr/cli.hpp"

int main(int argc, char** argv) { return deardr::cli::run(argc, argv); }
