#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sgmlab/stream.hpp"

namespace sgmlab {

enum class BufferPolicy { unlimited_cumulative, reservoir, class_balanced_evict_largest };

BufferPolicy parse_buffer_policy(const std::string& s);
std::string to_string(BufferPolicy p);

struct BufferSample {
  std::size_t index = 0;        // row in the owning Dataset
  std::size_t label = 0;        // model output index
  std::vector<double> logits;   // captured at insertion (DERpp); may be empty
};

class RehearsalBuffer {
 public:
  // capacity is ignored by unlimited_cumulative and required by the bounded policies.
  explicit RehearsalBuffer(BufferPolicy policy = BufferPolicy::unlimited_cumulative,
                           std::optional<std::size_t> capacity = std::nullopt);

  // Returns true when the sample ended up in the store.
  bool insert(BufferSample sample, std::mt19937_64& rng);

  BufferPolicy policy() const { return policy_; }
  std::optional<std::size_t> capacity() const { return capacity_; }
  std::size_t size() const { return store_.size(); }
  bool empty() const { return store_.empty(); }
  std::uint64_t seen() const { return seen_; }
  const std::vector<BufferSample>& samples() const { return store_; }
  const BufferSample& at(std::size_t pos) const { return store_.at(pos); }

  std::size_t class_count(std::size_t label) const;
  std::size_t max_class_count() const;
  std::vector<std::size_t> classes_present() const;

  // Recounts the store and compares against the incremental bookkeeping.
  bool bookkeeping_consistent() const;

  std::size_t sample_uniform(std::mt19937_64& rng) const;
  // Class uniformly among stored classes, then a member uniformly within it.
  std::size_t sample_balanced(std::mt19937_64& rng) const;

 private:
  void append(BufferSample s);
  void replace(std::size_t pos, BufferSample s);

  BufferPolicy policy_;
  std::optional<std::size_t> capacity_;
  std::vector<BufferSample> store_;
  std::vector<std::vector<std::size_t>> members_;  // label -> store positions
  std::uint64_t seen_ = 0;
};

struct MinibatchSpec {
  std::size_t batch_size = 128;
  double new_fraction = 0.5;
  bool balanced = false;

  void validate() const;
  // floor(b * new_fraction); the remainder comes from the buffer.
  std::size_t new_count() const;
};

struct Minibatch {
  std::vector<std::size_t> new_items;     // positions in the current batch
  std::vector<std::size_t> replay_items;  // positions in the buffer
  bool buffer_was_empty = false;
};

Minibatch sample_minibatch(const RehearsalBuffer& buffer, std::size_t current_batch_size,
                           const MinibatchSpec& spec, std::mt19937_64& rng);

// Buffer contents as a dataset (for CSV export). Labels are the stored model labels.
Dataset buffer_to_dataset(const RehearsalBuffer& buffer, const Dataset& source);

}  // namespace sgmlab
