#include "hdrtm/cli.hpp"

int main(int argc, char** argv) { return hdrtm::run_cli(argc, argv); }
