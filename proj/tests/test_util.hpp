#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <unistd.h>

#include <gtest/gtest.h>

#include "amaze/maze.hpp"
#include "amaze/rng.hpp"

namespace amaze::test {

inline std::filesystem::path golden_dir() { return AMAZE_GOLDEN_DIR; }

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

/// Compares against tests/golden/<name>; AMAZE_UPDATE_GOLDEN=1 rewrites it instead.
inline void expect_golden(const std::string& name, const std::string& actual) {
  const auto path = golden_dir() / name;
  if (const char* update = std::getenv("AMAZE_UPDATE_GOLDEN"); update && std::string(update) == "1") {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream(path, std::ios::binary) << actual;
    return;
  }
  ASSERT_TRUE(std::filesystem::exists(path)) << "missing golden file " << path;
  EXPECT_EQ(slurp(path), actual) << "golden mismatch: " << name;
}

/// Fresh empty directory under the build tree's temp area.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("amaze_test_" + std::to_string(getpid()) + "_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Random valid spec covering all classes, sizes 2..12 and every start corner.
inline MazeSpec random_spec(Pcg32& rng) {
  MazeSpec s;
  s.width = 2 + static_cast<int>(rng.below(11));
  s.height = 2 + static_cast<int>(rng.below(11));
  s.seed = rng.next();
  s.start_corner = static_cast<Corner>(rng.below(4));
  const auto cls = static_cast<MazeClass>(rng.below(5));
  s = with_class(s, cls, 0.05 + 0.9 * rng.uniform(), 0.05 + 0.9 * rng.uniform());
  return s;
}

}  // namespace amaze::test
