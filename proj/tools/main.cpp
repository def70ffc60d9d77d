#include "cli_app.hpp"

int main(int argc, char** argv) { return relaymdp::cli::run(argc, argv); }
