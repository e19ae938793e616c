#include <iostream>

#include "sinddm/cli.hpp"

int main(int argc, char** argv) { return sinddm::run_cli(argc, argv, std::cout, std::cerr); }
