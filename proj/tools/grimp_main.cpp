#include <iostream>
#include <string>
#include <vector>

#include "grimp/cli.hpp"

int main(int argc, char** argv) {
  return grimp::run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
