#include "unitst/cli.hpp"

int main(int argc, char** argv) { return unitst::run(argc, argv); }
