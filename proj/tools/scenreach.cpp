#include "scenreach/cli.hpp"

int main(int argc, char** argv) { return scenreach::cli::run(argc, argv); }
