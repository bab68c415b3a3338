#include "qcd_cli.hpp"

int main(int argc, char** argv) { return qcd::cli::run(argc, argv, std::cout, std::cerr); }
