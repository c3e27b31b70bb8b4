#include "ecodyn/cli.hpp"

int main(int argc, char** argv) { return ecodyn::cli::run(argc, argv); }
