#include "medeval/cli.hpp"

int main(int argc, char** argv) { return medeval::cli::dispatch(argc, argv); }
