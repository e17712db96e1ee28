#include "commands.hpp"

int main(int argc, char** argv) { return higan::cli::run(argc, argv); }
