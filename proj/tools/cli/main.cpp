#include "commands.hpp"

int main(int argc, char** argv) { return xumx::cli::run(argc, argv); }
