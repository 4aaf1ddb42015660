#include "rdist/app/commands.hpp"

int main(int argc, char** argv) { return rdist::app::run_cli(argc, argv); }
