#include "sgmlab/stream.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

namespace sgmlab {

std::size_t Dataset::num_classes() const {
  if (labels.empty()) return 0;
  return *std::max_element(labels.begin(), labels.end()) + 1;
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(num_classes(), 0);
  for (auto l : labels) counts[l] += 1;
  return counts;
}

void Dataset::validate() const {
  if (labels.empty()) throw DataError("dataset has no samples");
  if (features.rows() != labels.size()) {
    throw DataError("dataset has " + std::to_string(features.rows()) + " feature rows but " +
                    std::to_string(labels.size()) + " labels");
  }
  const auto counts = class_counts();
  for (std::size_t k = 0; k < counts.size(); ++k) {
    if (counts[k] == 0) throw DataError("class " + std::to_string(k) + " has no samples");
  }
  if (!class_names.empty() && class_names.size() != counts.size()) {
    throw DataError("class_names size does not match class count");
  }
  if (!features.all_finite()) throw DataError("dataset contains non-finite features");
}

std::uint64_t Dataset::fingerprint() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  const std::uint64_t shape[2] = {features.rows(), features.cols()};
  mix(shape, sizeof(shape));
  mix(features.data(), features.size() * sizeof(double));
  for (auto l : labels) {
    const std::uint64_t v = l;
    mix(&v, sizeof(v));
  }
  return h;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

}  // namespace

Dataset parse_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header = split_csv_line(line);
      break;
    }
  }
  if (header.empty()) throw DataError("csv: missing header row");
  if (header.size() < 2) throw DataError("csv line " + std::to_string(line_no) +
                                         ": header needs feature columns and a label column");
  const std::size_t d = header.size() - 1;
  for (std::size_t c = 0; c < d; ++c) {
    if (trim(header[c]) != "f" + std::to_string(c)) {
      throw DataError("csv line " + std::to_string(line_no) + ": unknown header column '" +
                      header[c] + "' (expected f" + std::to_string(c) + ")");
    }
  }
  if (trim(header.back()) != "label") {
    throw DataError("csv line " + std::to_string(line_no) + ": unknown header column '" +
                    header.back() + "' (expected label)");
  }

  Dataset data;
  std::vector<double> values;
  std::unordered_map<std::string, std::size_t> label_ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw DataError("csv line " + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " fields, got " +
                      std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < d; ++c) {
      const std::string cell = trim(cells[c]);
      double v = 0.0;
      const auto* end = cell.data() + cell.size();
      auto [ptr, ec] = std::from_chars(cell.data(), end, v);
      if (cell.empty() || ec != std::errc() || ptr != end || !std::isfinite(v)) {
        throw DataError("csv line " + std::to_string(line_no) + ": non-numeric feature '" +
                        cells[c] + "' in column f" + std::to_string(c));
      }
      values.push_back(v);
    }
    const std::string name = trim(cells.back());
    if (name.empty()) throw DataError("csv line " + std::to_string(line_no) + ": empty label");
    auto [it, inserted] = label_ids.try_emplace(name, data.class_names.size());
    if (inserted) data.class_names.push_back(name);
    data.labels.push_back(it->second);
  }
  if (data.labels.empty()) throw DataError("csv: no samples");
  data.features = Tensor2<double>(data.labels.size(), d, std::move(values));
  data.validate();
  return data;
}

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("csv: cannot open " + path.string());
  return parse_csv(in);
}

void write_csv(const Dataset& data, std::ostream& out) {
  for (std::size_t c = 0; c < data.dims(); ++c) out << 'f' << c << ',';
  out << "label\n";
  char buf[64];
  for (std::size_t r = 0; r < data.size(); ++r) {
    for (double v : data.features.row(r)) {
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
      out.write(buf, ptr - buf);
      out << ',';
    }
    const auto l = data.labels[r];
    if (!data.class_names.empty()) {
      out << data.class_names[l];
    } else {
      out << l;
    }
    out << '\n';
  }
}

void export_csv(const Dataset& data, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("csv: cannot write " + path.string());
  write_csv(data, out);
}

namespace {

struct IdxFile {
  std::vector<std::uint32_t> dims;
  std::vector<unsigned char> payload;
};

IdxFile read_idx(const std::filesystem::path& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(std::string("idx: cannot open ") + what + " file " + path.string());
  unsigned char magic[4];
  if (!in.read(reinterpret_cast<char*>(magic), 4)) {
    throw DataError(std::string("idx: truncated header in ") + what + " file");
  }
  if (magic[0] != 0 || magic[1] != 0 || magic[2] != 0x08 || magic[3] == 0) {
    throw DataError(std::string("idx: magic mismatch in ") + what +
                    " file (expected unsigned-byte IDX)");
  }
  IdxFile f;
  std::size_t total = 1;
  for (int i = 0; i < magic[3]; ++i) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) {
      throw DataError(std::string("idx: truncated dimension header in ") + what + " file");
    }
    const std::uint32_t dim = (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
                              (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
    f.dims.push_back(dim);
    total *= dim;
  }
  f.payload.resize(total);
  if (total > 0 && !in.read(reinterpret_cast<char*>(f.payload.data()),
                            static_cast<std::streamsize>(total))) {
    throw DataError(std::string("idx: truncated payload in ") + what + " file (expected " +
                    std::to_string(total) + " bytes)");
  }
  return f;
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path) {
  const IdxFile images = read_idx(images_path, "images");
  const IdxFile labels = read_idx(labels_path, "labels");
  if (images.dims.size() < 2) throw DataError("idx: images file needs at least 2 dimensions");
  if (labels.dims.size() != 1) throw DataError("idx: labels file must be 1-dimensional");
  const std::size_t n = images.dims[0];
  if (labels.dims[0] != n) {
    throw DataError("idx: " + std::to_string(n) + " images but " +
                    std::to_string(labels.dims[0]) + " labels");
  }
  if (n == 0) throw DataError("idx: no samples");
  const std::size_t d = images.payload.size() / n;

  Dataset data;
  data.features = Tensor2<double>(n, d);
  for (std::size_t i = 0; i < images.payload.size(); ++i) {
    data.features.data()[i] = static_cast<double>(images.payload[i]) / 255.0;
  }
  const std::set<unsigned char> values(labels.payload.begin(), labels.payload.end());
  std::map<unsigned char, std::size_t> dense;
  for (auto v : values) {
    dense.emplace(v, dense.size());
    data.class_names.push_back(std::to_string(v));
  }
  for (auto v : labels.payload) data.labels.push_back(dense.at(v));
  data.validate();
  return data;
}

std::vector<std::size_t> synthetic_class_sizes(const SyntheticSpec& spec) {
  std::vector<std::size_t> sizes(spec.classes);
  for (std::size_t k = 0; k < spec.classes; ++k) {
    const double s = static_cast<double>(spec.n_per_class) *
                     std::pow(static_cast<double>(k + 1), -spec.imbalance_exponent);
    // Guard against 100 * 1/3 = 33.333...4 style rounding before the ceiling.
    sizes[k] = static_cast<std::size_t>(std::ceil(s - 1e-9));
    if (sizes[k] == 0) sizes[k] = 1;
  }
  return sizes;
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.classes < 2) throw std::invalid_argument("synthetic: need at least 2 classes");
  if (spec.dims < 2) throw std::invalid_argument("synthetic: need at least 2 dims");
  if (spec.n_per_class == 0) throw std::invalid_argument("synthetic: n_per_class must be >= 1");
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto sizes = synthetic_class_sizes(spec);
  const std::size_t total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});

  Dataset data;
  data.features = Tensor2<double>(total, spec.dims);
  data.labels.reserve(total);
  std::size_t row = 0;
  std::vector<double> mean(spec.dims);
  for (std::size_t k = 0; k < spec.classes; ++k) {
    double sq = 0.0;
    for (auto& m : mean) {
      m = normal(rng);
      sq += m * m;
    }
    const double scale = spec.class_separation / std::sqrt(sq);
    for (auto& m : mean) m *= scale;
    for (std::size_t i = 0; i < sizes[k]; ++i, ++row) {
      auto r = data.features.row(row);
      for (std::size_t c = 0; c < spec.dims; ++c) r[c] = mean[c] + normal(rng);
      data.labels.push_back(k);
    }
  }
  data.validate();
  return data;
}

HoldoutSplit holdout_split(const Dataset& data, double test_fraction, std::mt19937_64& rng) {
  if (test_fraction < 0.0 || test_fraction >= 1.0) {
    throw std::invalid_argument("test_fraction must be in [0,1)");
  }
  std::vector<std::vector<std::size_t>> by_class(data.num_classes());
  for (std::size_t i = 0; i < data.size(); ++i) by_class[data.labels[i]].push_back(i);
  HoldoutSplit split;
  for (auto& idx : by_class) {
    std::shuffle(idx.begin(), idx.end(), rng);
    std::size_t n_test = static_cast<std::size_t>(std::floor(test_fraction * double(idx.size())));
    if (n_test >= idx.size()) n_test = idx.size() - 1;
    split.test.insert(split.test.end(), idx.begin(), idx.begin() + std::ptrdiff_t(n_test));
    split.train.insert(split.train.end(), idx.begin() + std::ptrdiff_t(n_test), idx.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

Ordering parse_ordering(const std::string& s) {
  if (s == "cil") return Ordering::cil;
  if (s == "iid") return Ordering::iid;
  throw std::invalid_argument("unknown ordering '" + s + "' (expected cil|iid)");
}

std::string to_string(Ordering o) { return o == Ordering::cil ? "cil" : "iid"; }

std::vector<std::size_t> StreamSchedule::class_order() const {
  std::vector<std::size_t> order;
  std::set<std::size_t> seen;
  for (const auto& s : sessions) {
    for (auto c : s.classes) {
      if (seen.insert(c).second) order.push_back(c);
    }
  }
  return order;
}

namespace {

void set_label_space(const Dataset& data, Session& s) {
  std::set<std::size_t> cls;
  for (auto i : s.samples) cls.insert(data.labels[i]);
  s.classes.assign(cls.begin(), cls.end());
}

}  // namespace

StreamSchedule make_cil_schedule(const Dataset& data, const std::vector<std::size_t>& train,
                                 std::size_t pretrain_classes, std::size_t n_sessions,
                                 std::size_t classes_per_session, std::mt19937_64& rng) {
  const std::size_t K = data.num_classes();
  if (pretrain_classes == 0 || pretrain_classes >= K) {
    throw std::invalid_argument("cil schedule: pretrain_classes must be in [1, K)");
  }
  if (n_sessions == 0 || classes_per_session == 0 ||
      n_sessions * classes_per_session > K - pretrain_classes) {
    throw std::invalid_argument("cil schedule: " + std::to_string(n_sessions) + " sessions x " +
                                std::to_string(classes_per_session) + " classes exceeds the " +
                                std::to_string(K - pretrain_classes) +
                                " classes left after pretraining");
  }
  std::vector<std::size_t> rest(K - pretrain_classes);
  std::iota(rest.begin(), rest.end(), pretrain_classes);
  std::shuffle(rest.begin(), rest.end(), rng);

  std::vector<std::size_t> session_of(K, std::size_t(-1));
  for (std::size_t k = 0; k < pretrain_classes; ++k) session_of[k] = 0;
  for (std::size_t s = 0; s < n_sessions; ++s) {
    for (std::size_t c = 0; c < classes_per_session; ++c) {
      session_of[rest[s * classes_per_session + c]] = s + 1;
    }
  }
  StreamSchedule sched;
  sched.ordering = Ordering::cil;
  sched.sessions.resize(n_sessions + 1);
  sched.sessions[0].pretrain = true;
  for (auto i : train) {
    const auto s = session_of[data.labels[i]];
    if (s != std::size_t(-1)) sched.sessions[s].samples.push_back(i);
  }
  for (auto& s : sched.sessions) set_label_space(data, s);
  return sched;
}

StreamSchedule make_iid_schedule(const Dataset& data, const std::vector<std::size_t>& train,
                                 const PretrainSplit& pretrain, std::size_t n_sessions,
                                 std::size_t samples_per_session, std::mt19937_64& rng) {
  if (n_sessions == 0) throw std::invalid_argument("iid schedule: need at least one session");
  StreamSchedule sched;
  sched.ordering = Ordering::iid;
  sched.sessions.resize(n_sessions + 1);
  sched.sessions[0].pretrain = true;

  std::vector<std::size_t> rest;
  if (pretrain.fraction) {
    const double f = *pretrain.fraction;
    if (!(f > 0.0 && f < 1.0)) throw std::invalid_argument("iid schedule: pretrain_fraction in (0,1)");
    std::vector<std::size_t> idx = train;
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n_pre = static_cast<std::size_t>(std::floor(f * double(idx.size())));
    sched.sessions[0].samples.assign(idx.begin(), idx.begin() + std::ptrdiff_t(n_pre));
    std::sort(sched.sessions[0].samples.begin(), sched.sessions[0].samples.end());
    rest.assign(idx.begin() + std::ptrdiff_t(n_pre), idx.end());
  } else {
    if (pretrain.classes == 0 || pretrain.classes >= data.num_classes()) {
      throw std::invalid_argument("iid schedule: pretrain_classes must be in [1, K)");
    }
    for (auto i : train) {
      if (data.labels[i] < pretrain.classes) {
        sched.sessions[0].samples.push_back(i);
      } else {
        rest.push_back(i);
      }
    }
    std::shuffle(rest.begin(), rest.end(), rng);
  }
  if (samples_per_session == 0) samples_per_session = rest.size() / n_sessions;
  if (samples_per_session == 0 || n_sessions * samples_per_session > rest.size()) {
    throw std::invalid_argument("iid schedule: " + std::to_string(n_sessions) + " sessions x " +
                                std::to_string(samples_per_session) + " samples exceeds the " +
                                std::to_string(rest.size()) + " samples after pretraining");
  }
  for (std::size_t s = 0; s < n_sessions; ++s) {
    auto& sess = sched.sessions[s + 1];
    sess.samples.assign(rest.begin() + std::ptrdiff_t(s * samples_per_session),
                        rest.begin() + std::ptrdiff_t((s + 1) * samples_per_session));
    std::sort(sess.samples.begin(), sess.samples.end());
  }
  for (auto& s : sched.sessions) set_label_space(data, s);
  return sched;
}

nlohmann::json schedule_to_json(const StreamSchedule& s) {
  nlohmann::json j;
  j["ordering"] = to_string(s.ordering);
  nlohmann::json sessions = nlohmann::json::array();
  for (std::size_t i = 0; i < s.sessions.size(); ++i) {
    const auto& sess = s.sessions[i];
    sessions.push_back({{"session", i + 1},
                        {"pretrain", sess.pretrain},
                        {"classes", sess.classes},
                        {"samples", sess.samples}});
  }
  j["sessions"] = std::move(sessions);
  return j;
}

StreamSchedule schedule_from_json(const nlohmann::json& j) {
  StreamSchedule s;
  s.ordering = parse_ordering(j.at("ordering").get<std::string>());
  for (const auto& sj : j.at("sessions")) {
    Session sess;
    sess.pretrain = sj.at("pretrain").get<bool>();
    sess.classes = sj.at("classes").get<std::vector<std::size_t>>();
    sess.samples = sj.at("samples").get<std::vector<std::size_t>>();
    s.sessions.push_back(std::move(sess));
  }
  return s;
}

template <class T>
Tensor2<T> gather_features(const Dataset& data, const std::vector<std::size_t>& indices) {
  Tensor2<T> out(indices.size(), data.dims());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    auto src = data.features.row(indices[r]);
    auto dst = out.row(r);
    for (std::size_t c = 0; c < src.size(); ++c) dst[c] = static_cast<T>(src[c]);
  }
  return out;
}

template Tensor2<float> gather_features<float>(const Dataset&, const std::vector<std::size_t>&);
template Tensor2<double> gather_features<double>(const Dataset&, const std::vector<std::size_t>&);

}  // namespace sgmlab
