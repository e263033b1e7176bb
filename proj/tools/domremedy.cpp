#include "domremedy/workspace.hpp"

int main(int argc, char** argv) { return domremedy::run_cli(argc, argv); }
