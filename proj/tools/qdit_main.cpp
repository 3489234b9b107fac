#include "qdit/commands.hpp"

int main(int argc, char** argv) { return qdit::run_cli(argc, argv); }
