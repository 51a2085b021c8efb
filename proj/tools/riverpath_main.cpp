#include "riverpath/pipeline.hpp"

int main(int argc, char** argv) { return rp::cli_main(argc, argv); }
