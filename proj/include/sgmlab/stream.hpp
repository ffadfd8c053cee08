#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "sgmlab/tensor.hpp"

namespace sgmlab {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Dataset {
  Tensor2<double> features;  // samples x dims
  std::vector<std::size_t> labels;
  std::vector<std::string> class_names;  // optional; indexed by label

  std::size_t size() const { return labels.size(); }
  std::size_t dims() const { return features.cols(); }
  std::size_t num_classes() const;
  std::vector<std::size_t> class_counts() const;

  // Labels dense in 0..K-1, every class present, one feature width.
  void validate() const;

  // Stable fingerprint of features and labels (FNV-1a over the raw bytes).
  std::uint64_t fingerprint() const;
};

// CSV with header f0,...,f{d-1},label. Labels are densified to 0..K-1 in order
// of first appearance; the original strings become class_names.
Dataset load_csv(const std::filesystem::path& path);
Dataset parse_csv(std::istream& in);
void export_csv(const Dataset& data, const std::filesystem::path& path);
void write_csv(const Dataset& data, std::ostream& out);

// IDX (big-endian magic-number format). Pixels are scaled by 1/255 and images
// flattened; label values are densified in ascending order.
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

struct SyntheticSpec {
  std::size_t classes = 10;
  std::size_t dims = 16;
  std::size_t n_per_class = 100;
  std::uint64_t seed = 0;
  double imbalance_exponent = 0.0;
  double class_separation = 3.0;  // norm of each class mean
};

// Class k: Gaussian with unit covariance around class_separation * (random unit
// direction), with ceil(n_per_class * (k+1)^-imbalance_exponent) samples.
Dataset generate_synthetic(const SyntheticSpec& spec);
std::vector<std::size_t> synthetic_class_sizes(const SyntheticSpec& spec);

// Per-class held-out split; floor(fraction * n_c) test samples per class, with
// at least one training sample kept.
struct HoldoutSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};
HoldoutSplit holdout_split(const Dataset& data, double test_fraction, std::mt19937_64& rng);

enum class Ordering { cil, iid };
Ordering parse_ordering(const std::string& s);
std::string to_string(Ordering o);

struct ComputeBudget {
  std::size_t iterations = 0;  // U
  std::size_t batch_size = 1;  // b
  std::size_t presentations() const { return iterations * batch_size; }
};

struct Session {
  std::vector<std::size_t> samples;  // dataset indices (training split)
  std::vector<std::size_t> classes;  // label space, ascending
  bool pretrain = false;
};

// sessions[0] is the pretraining batch S_1; sessions[1..] are the CL batches.
struct StreamSchedule {
  Ordering ordering = Ordering::cil;
  std::vector<Session> sessions;

  std::size_t num_sessions() const { return sessions.size(); }
  // Classes in order of first appearance across sessions.
  std::vector<std::size_t> class_order() const;
};

struct PretrainSplit {
  std::size_t classes = 0;  // the first `classes` labels form S_1
  std::optional<double> fraction;  // IID only: random fraction of samples instead
};

StreamSchedule make_cil_schedule(const Dataset& data, const std::vector<std::size_t>& train,
                                 std::size_t pretrain_classes, std::size_t n_sessions,
                                 std::size_t classes_per_session, std::mt19937_64& rng);

// samples_per_session = 0 divides the post-pretraining samples evenly.
StreamSchedule make_iid_schedule(const Dataset& data, const std::vector<std::size_t>& train,
                                 const PretrainSplit& pretrain, std::size_t n_sessions,
                                 std::size_t samples_per_session, std::mt19937_64& rng);

nlohmann::json schedule_to_json(const StreamSchedule& s);
StreamSchedule schedule_from_json(const nlohmann::json& j);

// Rows of `data` at `indices`, converted to the training precision.
template <class T>
Tensor2<T> gather_features(const Dataset& data, const std::vector<std::size_t>& indices);

}  // namespace sgmlab
