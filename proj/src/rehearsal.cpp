#include "sgmlab/rehearsal.hpp"

#include <algorithm>
#include <cmath>

#include "sgmlab/log.hpp"

namespace sgmlab {

BufferPolicy parse_buffer_policy(const std::string& s) {
  if (s == "unlimited" || s == "unlimited_cumulative") return BufferPolicy::unlimited_cumulative;
  if (s == "reservoir") return BufferPolicy::reservoir;
  if (s == "class_balanced" || s == "class_balanced_evict_largest") {
    return BufferPolicy::class_balanced_evict_largest;
  }
  throw std::invalid_argument("unknown buffer policy '" + s +
                              "' (expected unlimited|reservoir|class_balanced)");
}

std::string to_string(BufferPolicy p) {
  switch (p) {
    case BufferPolicy::unlimited_cumulative: return "unlimited";
    case BufferPolicy::reservoir: return "reservoir";
    case BufferPolicy::class_balanced_evict_largest: return "class_balanced";
  }
  return "?";
}

RehearsalBuffer::RehearsalBuffer(BufferPolicy policy, std::optional<std::size_t> capacity)
    : policy_(policy), capacity_(capacity) {
  if (policy_ == BufferPolicy::unlimited_cumulative) {
    capacity_.reset();
  } else if (!capacity_ || *capacity_ == 0) {
    throw std::invalid_argument("bounded buffer policy " + to_string(policy_) +
                                " needs a positive capacity");
  }
}

void RehearsalBuffer::append(BufferSample s) {
  if (s.label >= members_.size()) members_.resize(s.label + 1);
  members_[s.label].push_back(store_.size());
  store_.push_back(std::move(s));
}

void RehearsalBuffer::replace(std::size_t pos, BufferSample s) {
  auto& old_list = members_[store_[pos].label];
  old_list.erase(std::find(old_list.begin(), old_list.end(), pos));
  if (s.label >= members_.size()) members_.resize(s.label + 1);
  members_[s.label].push_back(pos);
  store_[pos] = std::move(s);
}

bool RehearsalBuffer::insert(BufferSample sample, std::mt19937_64& rng) {
  seen_ += 1;
  if (!capacity_ || store_.size() < *capacity_) {
    append(std::move(sample));
    return true;
  }
  if (policy_ == BufferPolicy::reservoir) {
    std::uniform_int_distribution<std::uint64_t> pick(0, seen_ - 1);
    const auto j = pick(rng);
    if (j >= *capacity_) return false;
    replace(static_cast<std::size_t>(j), std::move(sample));
    return true;
  }
  // class_balanced_evict_largest: evict from a largest class. When the incoming
  // class is itself among the largest it is the victim class, so the maximum
  // never grows.
  const std::size_t mx = max_class_count();
  std::size_t victim_class;
  if (class_count(sample.label) == mx) {
    victim_class = sample.label;
  } else {
    std::vector<std::size_t> largest;
    for (std::size_t c = 0; c < members_.size(); ++c) {
      if (members_[c].size() == mx) largest.push_back(c);
    }
    std::uniform_int_distribution<std::size_t> pick(0, largest.size() - 1);
    victim_class = largest[pick(rng)];
  }
  const auto& list = members_[victim_class];
  std::uniform_int_distribution<std::size_t> pick(0, list.size() - 1);
  replace(list[pick(rng)], std::move(sample));
  return true;
}

std::size_t RehearsalBuffer::class_count(std::size_t label) const {
  return label < members_.size() ? members_[label].size() : 0;
}

std::size_t RehearsalBuffer::max_class_count() const {
  std::size_t mx = 0;
  for (const auto& m : members_) mx = std::max(mx, m.size());
  return mx;
}

std::vector<std::size_t> RehearsalBuffer::classes_present() const {
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < members_.size(); ++c) {
    if (!members_[c].empty()) out.push_back(c);
  }
  return out;
}

bool RehearsalBuffer::bookkeeping_consistent() const {
  if (capacity_ && store_.size() > *capacity_) return false;
  std::vector<std::size_t> counts(members_.size(), 0);
  for (std::size_t pos = 0; pos < store_.size(); ++pos) {
    const auto l = store_[pos].label;
    if (l >= members_.size()) return false;
    counts[l] += 1;
    const auto& list = members_[l];
    if (std::find(list.begin(), list.end(), pos) == list.end()) return false;
  }
  for (std::size_t c = 0; c < members_.size(); ++c) {
    if (counts[c] != members_[c].size()) return false;
  }
  return true;
}

std::size_t RehearsalBuffer::sample_uniform(std::mt19937_64& rng) const {
  if (store_.empty()) throw std::logic_error("sample from empty buffer");
  std::uniform_int_distribution<std::size_t> pick(0, store_.size() - 1);
  return pick(rng);
}

std::size_t RehearsalBuffer::sample_balanced(std::mt19937_64& rng) const {
  const auto present = classes_present();
  if (present.empty()) throw std::logic_error("sample from empty buffer");
  std::uniform_int_distribution<std::size_t> pick_class(0, present.size() - 1);
  const auto& list = members_[present[pick_class(rng)]];
  std::uniform_int_distribution<std::size_t> pick(0, list.size() - 1);
  return list[pick(rng)];
}

void MinibatchSpec::validate() const {
  if (batch_size == 0) throw std::invalid_argument("minibatch size must be >= 1");
  if (!(new_fraction > 0.0 && new_fraction <= 1.0)) {
    throw std::invalid_argument("new_fraction must be in (0, 1]");
  }
}

std::size_t MinibatchSpec::new_count() const {
  // The epsilon keeps b * (1/b) from flooring to 0.
  const double n = std::floor(static_cast<double>(batch_size) * new_fraction + 1e-9);
  return std::min(batch_size, static_cast<std::size_t>(n));
}

Minibatch sample_minibatch(const RehearsalBuffer& buffer, std::size_t current_batch_size,
                           const MinibatchSpec& spec, std::mt19937_64& rng) {
  spec.validate();
  if (current_batch_size == 0) throw std::invalid_argument("sample_minibatch: empty current batch");
  Minibatch mb;
  std::size_t n_new = spec.new_count();
  if (n_new < spec.batch_size && buffer.empty()) {
    mb.buffer_was_empty = true;
    n_new = spec.batch_size;
  }
  std::uniform_int_distribution<std::size_t> pick_new(0, current_batch_size - 1);
  mb.new_items.reserve(n_new);
  for (std::size_t i = 0; i < n_new; ++i) mb.new_items.push_back(pick_new(rng));
  const std::size_t n_old = spec.batch_size - n_new;
  mb.replay_items.reserve(n_old);
  for (std::size_t i = 0; i < n_old; ++i) {
    mb.replay_items.push_back(spec.balanced ? buffer.sample_balanced(rng)
                                            : buffer.sample_uniform(rng));
  }
  return mb;
}

Dataset buffer_to_dataset(const RehearsalBuffer& buffer, const Dataset& source) {
  Dataset out;
  std::vector<std::size_t> idx;
  for (const auto& s : buffer.samples()) {
    idx.push_back(s.index);
    out.labels.push_back(s.label);
  }
  out.features = gather_features<double>(source, idx);
  return out;
}

}  // namespace sgmlab
