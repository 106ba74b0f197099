#include "commands.hpp"

int main(int argc, char** argv) { return msb::cli::run(argc, argv); }
