#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "sgmlab/model.hpp"

namespace sgmlab {

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
  double layer_decay = 0.9;  // lr multiplier per layer of distance from the output
};

// AdamW moments for the parameter list of one model layout. The layout is
// captured on the first step; a later step against a different layout throws.
template <class T>
struct OptimState {
  AdamWConfig config;
  std::vector<Tensor2<T>> m;
  std::vector<Tensor2<T>> v;
  std::uint64_t step = 0;

  OptimState() = default;
  explicit OptimState(AdamWConfig c) : config(c) {}
};

// One AdamW update with decoupled weight decay. `lr` is the scheduled base rate;
// a parameter at depth p uses lr * layer_decay^p. Frozen entries are skipped
// entirely. A non-finite gradient on any trainable entry throws NumericError
// before anything is modified.
template <class T>
void optimizer_step(Model<T>& model, OptimState<T>& state, double lr);

}  // namespace sgmlab
