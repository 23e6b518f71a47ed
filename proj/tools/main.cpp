#include "restorekit/cli.hpp"

int main(int argc, char** argv) { return restorekit::run_cli(argc, argv); }
