#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "sgmlab/model.hpp"

namespace sgmlab {

// ---------------------------------------------------------------------------
// Dynamic soft targets

enum class SoftTargetGate { correct_only, always };

SoftTargetGate parse_gate(const std::string& s);
std::string to_string(SoftTargetGate g);

// Per-class running average u_k of softmax outputs with observation counts c_k.
class SoftTargetTable {
 public:
  SoftTargetTable() = default;
  explicit SoftTargetTable(std::size_t classes);

  std::size_t classes() const { return u_.size(); }
  const std::vector<double>& u(std::size_t k) const { return u_.at(k); }
  std::uint64_t count(std::size_t k) const { return c_.at(k); }

  // u_k <- (c_k u_k + probs) / (c_k + 1); c_k <- c_k + 1.
  void update(std::size_t k, std::span<const double> probs);

  // Applies `update` if the gate admits it: correct_only requires
  // argmax(probs) == k. Returns whether the update happened.
  bool observe(std::size_t k, std::span<const double> probs, SoftTargetGate gate);

  // t <- u_k; t[k] <- 1; t[y_pred] <- 1/K when y_pred != k; t <- t / sum(t).
  std::vector<double> build_target(std::size_t k, std::size_t y_pred) const;

  // Extends every u_k with 1/K_new for the new entries and renormalizes; new
  // classes start uniform with c_k = 0.
  void grow(std::size_t new_classes);

  nlohmann::json to_json() const;
  static SoftTargetTable from_json(const nlohmann::json& j);

 private:
  std::vector<std::vector<double>> u_;
  std::vector<std::uint64_t> c_;
};

// ---------------------------------------------------------------------------
// Data-driven initialization of new output rows

inline constexpr double kMinEmbeddingNorm = 1e-12;

// Row k is the mean of the unit-normalized embeddings of class k. Embeddings
// with norm below 1e-12 are skipped; a class with no usable embedding gets a
// He-style random row (with a warning).
template <class T>
Tensor2<T> init_new_class_weights(const std::vector<Tensor2<T>>& embeddings_by_class,
                                  std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// LoRA

// Attaches adapters to the given hidden linear layers: B = 0,
// A ~ N(0, (1/r)^2). Host weight and bias are frozen. Requires r <= min(d,g)/2.
template <class T>
void inject_lora(Model<T>& model, const std::set<std::size_t>& layers, std::size_t rank,
                 std::uint64_t seed);

// W <- W + B A for every adapted layer, then drops the adapters. Host freeze
// masks set by inject_lora are released.
template <class T>
void fold_lora(Model<T>& model);

std::size_t lora_parameter_count(std::size_t out_dim, std::size_t in_dim, std::size_t rank);

// ---------------------------------------------------------------------------
// Freezing

struct FreezePolicy {
  std::set<std::size_t> old_classes;   // output rows (and biases) to freeze
  std::size_t frozen_layer_prefix = 0;  // leading hidden layers frozen entirely
};

// Sets freeze masks for the policy. Hidden layers outside the prefix are untouched.
template <class T>
void apply_oocf(Model<T>& model, const FreezePolicy& policy);

// ---------------------------------------------------------------------------
// Mechanism bundle

struct MethodBundle {
  bool weight_init = false;
  bool soft_targets = false;
  bool oocf = false;
  bool lora = false;
  std::size_t lora_rank = 4;
  SoftTargetGate gate = SoftTargetGate::correct_only;

  int active_count() const {
    return int(weight_init) + int(soft_targets) + int(oocf) + int(lora);
  }
  bool is_vanilla() const { return active_count() == 0; }
  std::vector<std::string> active_names() const;
};

struct SgmOptions {
  std::size_t lora_rank = 4;
  SoftTargetGate gate = SoftTargetGate::correct_only;
};

// All four mechanisms enabled.
MethodBundle compose_sgm(const SgmOptions& options = {});

// Bundle from mechanism names {weight_init, soft_targets, oocf, lora} or the
// shorthand "sgm". Unknown names throw.
MethodBundle bundle_from_names(const std::vector<std::string>& names, const SgmOptions& options);

}  // namespace sgmlab
