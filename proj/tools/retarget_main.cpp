#include "retarget/cli.hpp"

int main(int argc, char** argv) { return retarget::cli::run(argc, argv); }
