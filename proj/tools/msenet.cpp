#include "msenet/harness.hpp"

int main(int argc, char** argv) { return msenet::run_cli(argc, argv); }
