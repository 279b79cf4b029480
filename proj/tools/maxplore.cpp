// Command-line driver: chain / mcar experiment runs, config-file sweeps, and
// the built-in oracle self-checks.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "maxplore/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"active exploration via ensemble disagreement"};
  app.require_subcommand(1);
  std::cout << "maxplore: stub\n";
  (void)argc;
  (void)argv;
  return 0;
}
