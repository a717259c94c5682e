#include "dcomp/cli.hpp"

int main(int argc, char** argv) { return dcomp::cli::dispatch(argc, argv); }
