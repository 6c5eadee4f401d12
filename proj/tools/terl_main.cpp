#include "terl/cli.hpp"

int main(int argc, char** argv) { return terl::cli::run(argc, argv); }
