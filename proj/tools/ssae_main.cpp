#include "ssae/cli.hpp"

int main(int argc, char** argv) { return ssae::run_cli(argc, argv); }
