// tools/mceend.cc

#include <iostream>
#include <string>
#include <vector>

#include "mceend/cli.h"

int main(int argc, char **argv) {
  return mceend::run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
