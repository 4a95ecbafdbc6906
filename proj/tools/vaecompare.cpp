#include "vaecompare/cli.hpp"

int main(int argc, char** argv) { return vaecompare::cli::run(argc, argv); }
