#include "cli.hpp"

int main(int argc, char** argv) { return unwarp::cli::run(argc, argv); }
