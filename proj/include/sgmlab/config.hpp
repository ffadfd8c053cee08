#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "sgmlab/model.hpp"
#include "sgmlab/stream.hpp"
#include "sgmlab/trainer.hpp"

namespace sgmlab {

// Carries the dotted path of the offending field, e.g. "methods[1].buffer.capacity".
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& field, const std::string& message)
      : std::invalid_argument(field + ": " + message), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

enum class DataSource { synthetic, csv, idx };
enum class JointMode { per_prefix, final_only };
enum class BestReference { cohort, self };
enum class Precision { float32, float64 };

struct DatasetConfig {
  DataSource source = DataSource::synthetic;
  SyntheticSpec synthetic;
  bool synthetic_seed_from_experiment = true;
  std::string csv_path;
  std::string idx_images;
  std::string idx_labels;
  double test_fraction = 0.2;
};

struct ScheduleConfig {
  Ordering ordering = Ordering::cil;
  std::size_t pretrain_classes = 0;
  std::optional<double> pretrain_fraction;  // iid only
  std::size_t sessions = 1;                 // continual sessions after pretraining
  std::size_t classes_per_session = 1;      // cil
  std::size_t samples_per_session = 0;      // iid; 0 = even split
};

struct ModelConfig {
  std::vector<std::size_t> hidden{64, 64};
  Activation activation = Activation::relu;
};

struct JointConfig {
  JointMode mode = JointMode::per_prefix;
  FitConfig fit;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "runs/out";
  Precision precision = Precision::float32;
  DatasetConfig dataset;
  ScheduleConfig schedule;
  ModelConfig model;
  FitConfig pretrain;
  SessionConfig session;
  JointConfig joint;
  std::vector<MethodConfig> methods;
  std::vector<double> recovery_fractions{0.97, 0.98, 0.99, 1.0};
  BestReference best_reference = BestReference::cohort;
  bool save_checkpoints = true;
};

// Parses and validates every field; unknown keys are rejected. Relative data
// paths are resolved against base_dir.
ExperimentConfig parse_config(const nlohmann::json& j,
                              const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

// Fully resolved form (every default spelled out). parse_config of the
// result yields an identical config.
nlohmann::json config_to_json(const ExperimentConfig& config);

// Same config apart from seed and output_dir; used to group seed replicates.
std::string config_group_key(const ExperimentConfig& config);

std::string to_string(JointMode m);
std::string to_string(Precision p);

}  // namespace sgmlab
