#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "hopelab/rng.hpp"

namespace testing {

inline std::vector<double> random_vector(hope::Rng& rng, int n, double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = scale * rng.normal();
  return v;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("hopelab_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testing
