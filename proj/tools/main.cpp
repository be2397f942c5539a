#include "sps/cli.hpp"

int main(int argc, char** argv) { return sps::dispatch(argc, argv); }
