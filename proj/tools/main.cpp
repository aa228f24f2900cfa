#include "trustspeech/cli.hpp"

int main(int argc, char** argv) { return trustspeech::cli::run_cli(argc, argv); }
