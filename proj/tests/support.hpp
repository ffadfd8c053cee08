#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "sgmlab/loss.hpp"
#include "sgmlab/model.hpp"
#include "sgmlab/stream.hpp"

namespace testing {

using namespace sgmlab;

template <class T>
Tensor2<T> random_tensor(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                         double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Tensor2<T> t(rows, cols);
  for (auto& v : t.flat()) v = static_cast<T>(n(rng));
  return t;
}

// Random rows on the probability simplex.
inline Tensor2<double> random_targets(std::size_t rows, std::size_t k, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Tensor2<double> t(rows, k);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < k; ++c) s += t(r, c) = u(rng);
    for (std::size_t c = 0; c < k; ++c) t(r, c) /= s;
  }
  return t;
}

inline Dataset blobs(std::size_t classes, std::size_t per_class, std::size_t dims,
                     std::uint64_t seed, double separation = 6.0) {
  SyntheticSpec s;
  s.classes = classes;
  s.n_per_class = per_class;
  s.dims = dims;
  s.seed = seed;
  s.class_separation = separation;
  return generate_synthetic(s);
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("sgmlab_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

}  // namespace testing
