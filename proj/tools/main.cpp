#include <string>
#include <vector>

#include "uqevo/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return uqevo::cli::run_cli(args);
}
