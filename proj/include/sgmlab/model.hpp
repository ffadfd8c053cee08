#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sgmlab/tensor.hpp"

namespace sgmlab {

enum class Activation { relu, gelu };

Activation parse_activation(const std::string& s);
std::string to_string(Activation a);

// A trainable tensor with its gradient buffer and a per-element freeze mask.
template <class T>
struct Parameter {
  Tensor2<T> value;
  Tensor2<T> grad;
  std::vector<std::uint8_t> frozen;  // 1 = frozen; same length as value

  Parameter() = default;
  explicit Parameter(Tensor2<T> v)
      : value(std::move(v)), grad(value.rows(), value.cols()), frozen(value.size(), 0) {}

  void freeze_all() { std::fill(frozen.begin(), frozen.end(), std::uint8_t{1}); }
  void unfreeze_all() { std::fill(frozen.begin(), frozen.end(), std::uint8_t{0}); }
  void freeze_row(std::size_t r) {
    std::fill_n(frozen.begin() + static_cast<std::ptrdiff_t>(r * value.cols()), value.cols(),
                std::uint8_t{1});
  }
  std::size_t frozen_count() const;
  void append_rows(const Tensor2<T>& rows);
};

// Low-rank pair attached to a host linear layer: W_eff = W + B A.
template <class T>
struct LoraAdapter {
  Parameter<T> B;  // out x r
  Parameter<T> A;  // r x in
  std::size_t rank() const { return A.value.rows(); }
};

template <class T>
struct Linear {
  Parameter<T> weight;  // out x in
  Parameter<T> bias;    // 1 x out
  std::optional<LoraAdapter<T>> lora;

  std::size_t in_dim() const { return weight.value.cols(); }
  std::size_t out_dim() const { return weight.value.rows(); }
};

struct ModelSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden;
  std::size_t output_dim = 0;
  Activation activation = Activation::relu;
};

// Activations retained by forward() for backward().
template <class T>
struct ForwardPass {
  std::vector<Tensor2<T>> inputs;       // input of each layer
  std::vector<Tensor2<T>> preact;       // pre-activation of each hidden layer
  std::vector<Tensor2<T>> lora_hidden;  // x A^T for adapted layers, empty otherwise
  Tensor2<T> logits;

  // Penultimate features (input of the output layer).
  const Tensor2<T>& embeddings() const { return inputs.back(); }
};

template <class T>
struct ParamSlot {
  std::string name;
  Parameter<T>* param;
  int depth;  // distance from the output layer
};

template <class T>
class Model {
 public:
  Model() = default;
  Model(const ModelSpec& spec, std::uint64_t seed);

  ForwardPass<T> forward(const Tensor2<T>& x) const;
  Tensor2<T> logits(const Tensor2<T>& x) const { return forward(x).logits; }

  // Overwrites every gradient buffer from dL/dlogits; frozen entries end up zero.
  void backward(const ForwardPass<T>& pass, const Tensor2<T>& grad_logits);
  void zero_grad();

  std::vector<ParamSlot<T>> parameters();
  std::size_t parameter_count() const;
  std::size_t trainable_count() const;

  // Grows the output layer. New rows come from `init_rows` when given,
  // otherwise He-style Gaussian draws from the model RNG. Biases of new rows are 0.
  void expand_output(std::size_t new_classes, const Tensor2<T>* init_rows = nullptr);

  void clear_frozen();
  void freeze_layer(std::size_t index);

  std::size_t input_dim() const { return spec_.input_dim; }
  std::size_t output_dim() const { return layers_.back().out_dim(); }
  std::size_t penultimate_dim() const { return layers_.back().in_dim(); }
  std::size_t num_layers() const { return layers_.size(); }
  std::size_t num_hidden() const { return layers_.size() - 1; }
  Activation activation() const { return spec_.activation; }
  const ModelSpec& spec() const { return spec_; }
  int depth_of(std::size_t layer) const { return static_cast<int>(layers_.size() - 1 - layer); }

  std::vector<Linear<T>>& layers() { return layers_; }
  const std::vector<Linear<T>>& layers() const { return layers_; }
  Linear<T>& output_layer() { return layers_.back(); }
  const Linear<T>& output_layer() const { return layers_.back(); }

  bool has_adapters() const;

  std::mt19937_64& rng() { return rng_; }
  const std::mt19937_64& rng() const { return rng_; }

 private:
  ModelSpec spec_;
  std::vector<Linear<T>> layers_;
  std::mt19937_64 rng_;
};

template <class T>
Tensor2<T> he_normal(std::size_t rows, std::size_t fan_in, std::mt19937_64& rng);

// Deep, independent copy.
template <class T>
Model<T> clone_snapshot(const Model<T>& model) {
  return model;
}

template <class T>
std::vector<std::size_t> argmax_rows(const Tensor2<T>& m);

}  // namespace sgmlab
