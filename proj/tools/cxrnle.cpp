#include "cli.hpp"

int main(int argc, char** argv) { return cxrnle::cli::run(argc, argv); }
