#include "tips_cli/commands.hpp"

int main(int argc, char** argv) { return tips::cli::run_cli(argc, argv); }
