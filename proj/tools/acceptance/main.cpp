#include <iostream>
#include <vector>

#include "CLI11.hpp"

#include "acceptance.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Acceptance suite: one line per criterion"};
  std::vector<int> only;
  app.add_option("--only", only, "Criteria to run (default: all)")->check(CLI::Range(1, bsvie::acceptance::kCriteria));
  CLI11_PARSE(app, argc, argv);
  return bsvie::acceptance::run_suite(only, std::cout) ? 0 : 1;
}
