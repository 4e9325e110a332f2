#include "ltmlc/cli.hpp"

int main(int argc, char** argv) { return ltmlc::cli::run(argc, argv); }
