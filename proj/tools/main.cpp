#include "cli.hpp"

int main(int argc, char** argv) { return pscn::cli::run(argc, argv); }
