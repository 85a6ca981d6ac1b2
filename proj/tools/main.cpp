#include "cli.hpp"

int main(int argc, char** argv) { return occtrack::cli::run({argv, argv + argc}); }
