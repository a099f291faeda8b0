// Regenerates the bundled scenario files from the built-in generators.
// Usage: make_scenarios <output-dir>

#include <filesystem>
#include <iostream>

#include "urbanflow/urbanflow.hpp"

int main(int argc, char** argv) {
  namespace fs = std::filesystem;
  const fs::path dir = argc > 1 ? fs::path(argv[1]) : fs::path("scenarios");
  try {
    fs::create_directories(dir);
    urbanflow::save_scenario(urbanflow::make_grid_scenario(), (dir / "grid3x3.json").string());
    urbanflow::save_scenario(urbanflow::make_single_intersection(), (dir / "single_intersection.json").string());
    urbanflow::save_scenario(urbanflow::make_two_intersection_line(), (dir / "two_intersection_line.json").string());
    std::cout << "wrote scenarios to " << dir << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
