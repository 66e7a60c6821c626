#include "behrt/cli/app.hpp"

int main(int argc, char** argv) { return behrt::cli::run(argc, argv); }
