#include "cli.hpp"

int main(int argc, char** argv) { return bmfs::cli::run(argc, argv); }
