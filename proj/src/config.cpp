#include "sgmlab/config.hpp"

#include <fstream>
#include <regex>
#include <set>
#include <sstream>

namespace sgmlab {

using nlohmann::json;

std::string to_string(JointMode m) { return m == JointMode::per_prefix ? "per_prefix" : "final_only"; }
std::string to_string(Precision p) { return p == Precision::float32 ? "float32" : "float64"; }

namespace {

std::string to_string(DataSource s) {
  switch (s) {
    case DataSource::synthetic: return "synthetic";
    case DataSource::csv: return "csv";
    case DataSource::idx: return "idx";
  }
  return "?";
}

std::string to_string(BestReference b) { return b == BestReference::cohort ? "cohort" : "self"; }

// Object reader that remembers which keys were consumed, so leftovers can be
// reported as unknown.
class Obj {
 public:
  Obj(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where(), "expected an object");
  }

  std::string where(const std::string& key = {}) const {
    if (key.empty()) return path_.empty() ? "<root>" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

  const json* find(const std::string& key) {
    used_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return nullptr;
    return &*it;
  }

  bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

  double number(const std::string& key, double fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_number()) throw ConfigError(where(key), "expected a number");
    return v->get<double>();
  }

  std::size_t count(const std::string& key, std::size_t fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    return as_count(*v, where(key));
  }

  std::uint64_t u64(const std::string& key, std::uint64_t fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_number_integer() || (v->is_number_integer() && !v->is_number_unsigned() &&
                                    v->get<std::int64_t>() < 0)) {
      throw ConfigError(where(key), "expected a non-negative integer");
    }
    return v->get<std::uint64_t>();
  }

  bool boolean(const std::string& key, bool fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_boolean()) throw ConfigError(where(key), "expected true or false");
    return v->get<bool>();
  }

  std::string string(const std::string& key, const std::string& fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_string()) throw ConfigError(where(key), "expected a string");
    return v->get<std::string>();
  }

  template <class E, class Parse>
  E enumeration(const std::string& key, E fallback, Parse parse) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_string()) throw ConfigError(where(key), "expected a string");
    try {
      return parse(v->get<std::string>());
    } catch (const std::invalid_argument& e) {
      throw ConfigError(where(key), e.what());
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!used_.count(it.key())) throw ConfigError(where(it.key()), "unknown key");
    }
  }

  static std::size_t as_count(const json& v, const std::string& where) {
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
      throw ConfigError(where, "expected a non-negative integer");
    }
    return v.get<std::size_t>();
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

void require(bool ok, const std::string& field, const std::string& message) {
  if (!ok) throw ConfigError(field, message);
}

void read_optimizer(Obj& parent, const std::string& key, LrSchedule& lr, AdamWConfig& adamw) {
  const json* v = parent.find(key);
  if (!v) return;
  Obj o(*v, parent.where(key));
  lr.base_lr = o.number("lr", lr.base_lr);
  require(lr.base_lr > 0.0, o.where("lr"), "must be > 0");
  lr.kind = o.enumeration("schedule", lr.kind, parse_schedule);
  lr.layer_decay = o.number("layer_decay", lr.layer_decay);
  require(lr.layer_decay > 0.0 && lr.layer_decay <= 1.0, o.where("layer_decay"), "must be in (0,1]");
  lr.warmup_fraction = o.number("warmup_fraction", lr.warmup_fraction);
  require(lr.warmup_fraction >= 0.0 && lr.warmup_fraction < 1.0, o.where("warmup_fraction"),
          "must be in [0,1)");
  lr.start_divisor = o.number("start_divisor", lr.start_divisor);
  require(lr.start_divisor >= 1.0, o.where("start_divisor"), "must be >= 1");
  lr.final_divisor = o.number("final_divisor", lr.final_divisor);
  require(lr.final_divisor >= 1.0, o.where("final_divisor"), "must be >= 1");
  adamw.weight_decay = o.number("weight_decay", adamw.weight_decay);
  require(adamw.weight_decay >= 0.0, o.where("weight_decay"), "must be >= 0");
  adamw.beta1 = o.number("beta1", adamw.beta1);
  require(adamw.beta1 >= 0.0 && adamw.beta1 < 1.0, o.where("beta1"), "must be in [0,1)");
  adamw.beta2 = o.number("beta2", adamw.beta2);
  require(adamw.beta2 >= 0.0 && adamw.beta2 < 1.0, o.where("beta2"), "must be in [0,1)");
  adamw.eps = o.number("eps", adamw.eps);
  require(adamw.eps > 0.0, o.where("eps"), "must be > 0");
  adamw.layer_decay = lr.layer_decay;
  o.finish();
}

json optimizer_json(const LrSchedule& lr, const AdamWConfig& adamw) {
  return {{"lr", lr.base_lr},
          {"schedule", to_string(lr.kind)},
          {"layer_decay", lr.layer_decay},
          {"warmup_fraction", lr.warmup_fraction},
          {"start_divisor", lr.start_divisor},
          {"final_divisor", lr.final_divisor},
          {"weight_decay", adamw.weight_decay},
          {"beta1", adamw.beta1},
          {"beta2", adamw.beta2},
          {"eps", adamw.eps}};
}

ComputeBudget read_budget(Obj& o, ComputeBudget b, bool allow_zero_iterations) {
  b.iterations = o.count("iterations", b.iterations);
  b.batch_size = o.count("batch_size", b.batch_size);
  require(allow_zero_iterations || b.iterations >= 1, o.where("iterations"), "must be >= 1");
  require(b.batch_size >= 1, o.where("batch_size"), "must be >= 1");
  return b;
}

FitConfig read_fit(Obj& parent, const std::string& key, FitConfig fit) {
  const json* v = parent.find(key);
  if (!v) return fit;
  Obj o(*v, parent.where(key));
  fit.budget = read_budget(o, fit.budget, true);
  read_optimizer(o, "optimizer", fit.lr, fit.adamw);
  o.finish();
  return fit;
}

json fit_json(const FitConfig& f) {
  return {{"iterations", f.budget.iterations},
          {"batch_size", f.budget.batch_size},
          {"optimizer", optimizer_json(f.lr, f.adamw)}};
}

DatasetConfig read_dataset(Obj& root, const std::filesystem::path& base_dir) {
  DatasetConfig d;
  const json* v = root.find("dataset");
  if (!v) throw ConfigError("dataset", "required");
  Obj o(*v, "dataset");
  d.source = o.enumeration("source", d.source, [](const std::string& s) {
    if (s == "synthetic") return DataSource::synthetic;
    if (s == "csv") return DataSource::csv;
    if (s == "idx") return DataSource::idx;
    throw std::invalid_argument("unknown source '" + s + "' (expected synthetic|csv|idx)");
  });
  d.test_fraction = o.number("test_fraction", d.test_fraction);
  require(d.test_fraction > 0.0 && d.test_fraction < 1.0, o.where("test_fraction"),
          "must be in (0,1)");
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
    return path.lexically_normal().string();
  };
  if (d.source == DataSource::synthetic) {
    const json* s = o.find("synthetic");
    if (!s) throw ConfigError(o.where("synthetic"), "required when source is synthetic");
    Obj so(*s, o.where("synthetic"));
    auto& sp = d.synthetic;
    sp.classes = so.count("classes", sp.classes);
    require(sp.classes >= 2, so.where("classes"), "must be >= 2");
    sp.dims = so.count("dims", sp.dims);
    require(sp.dims >= 1, so.where("dims"), "must be >= 1");
    sp.n_per_class = so.count("n_per_class", sp.n_per_class);
    require(sp.n_per_class >= 2, so.where("n_per_class"), "must be >= 2");
    sp.imbalance_exponent = so.number("imbalance_exponent", sp.imbalance_exponent);
    require(sp.imbalance_exponent >= 0.0, so.where("imbalance_exponent"), "must be >= 0");
    sp.class_separation = so.number("class_separation", sp.class_separation);
    require(sp.class_separation > 0.0, so.where("class_separation"), "must be > 0");
    if (so.has("seed")) {
      sp.seed = so.u64("seed", 0);
      d.synthetic_seed_from_experiment = false;
    } else {
      so.find("seed");
    }
    so.finish();
  } else if (d.source == DataSource::csv) {
    d.csv_path = o.string("path", "");
    require(!d.csv_path.empty(), o.where("path"), "required when source is csv");
    d.csv_path = resolve(d.csv_path);
  } else {
    d.idx_images = o.string("images", "");
    require(!d.idx_images.empty(), o.where("images"), "required when source is idx");
    d.idx_labels = o.string("labels", "");
    require(!d.idx_labels.empty(), o.where("labels"), "required when source is idx");
    d.idx_images = resolve(d.idx_images);
    d.idx_labels = resolve(d.idx_labels);
  }
  o.finish();
  return d;
}

ScheduleConfig read_schedule(Obj& root) {
  ScheduleConfig s;
  const json* v = root.find("schedule");
  if (!v) throw ConfigError("schedule", "required");
  Obj o(*v, "schedule");
  s.ordering = o.enumeration("ordering", s.ordering, parse_ordering);
  s.sessions = o.count("sessions", s.sessions);
  require(s.sessions >= 1, o.where("sessions"), "must be >= 1");
  if (s.ordering == Ordering::cil) {
    s.pretrain_classes = o.count("pretrain_classes", 0);
    require(s.pretrain_classes >= 1, o.where("pretrain_classes"), "required (>= 1) for cil");
    s.classes_per_session = o.count("classes_per_session", s.classes_per_session);
    require(s.classes_per_session >= 1, o.where("classes_per_session"), "must be >= 1");
    require(!o.has("pretrain_fraction"), o.where("pretrain_fraction"), "only valid for iid");
    require(!o.has("samples_per_session"), o.where("samples_per_session"), "only valid for iid");
    o.find("pretrain_fraction");
    o.find("samples_per_session");
  } else {
    require(!o.has("classes_per_session"), o.where("classes_per_session"), "only valid for cil");
    o.find("classes_per_session");
    const bool by_fraction = o.has("pretrain_fraction");
    const bool by_classes = o.has("pretrain_classes");
    require(by_fraction != by_classes, o.where("pretrain_classes"),
            "iid needs exactly one of pretrain_classes or pretrain_fraction");
    if (by_fraction) {
      s.pretrain_fraction = o.number("pretrain_fraction", 0.0);
      require(*s.pretrain_fraction > 0.0 && *s.pretrain_fraction < 1.0,
              o.where("pretrain_fraction"), "must be in (0,1)");
      o.find("pretrain_classes");
    } else {
      s.pretrain_classes = o.count("pretrain_classes", 0);
      require(s.pretrain_classes >= 1, o.where("pretrain_classes"), "must be >= 1");
      o.find("pretrain_fraction");
    }
    s.samples_per_session = o.count("samples_per_session", 0);
  }
  o.finish();
  return s;
}

MethodConfig read_method(const json& j, const std::string& path, const ExperimentConfig& cfg) {
  Obj o(j, path);
  MethodConfig m;
  m.name = o.string("name", "");
  static const std::regex name_re("[A-Za-z0-9_.-]+");
  require(std::regex_match(m.name, name_re), o.where("name"),
          "required; letters, digits, '_', '-', '.' only");
  m.strategy = o.enumeration("strategy", m.strategy, parse_strategy);

  SgmOptions opts;
  opts.lora_rank = o.count("lora_rank", opts.lora_rank);
  require(opts.lora_rank >= 1, o.where("lora_rank"), "must be >= 1");
  opts.gate = o.enumeration("soft_target_gate", opts.gate, parse_gate);
  std::vector<std::string> names;
  if (const json* mech = o.find("mechanisms")) {
    if (mech->is_string()) {
      const auto s = mech->get<std::string>();
      if (s != "vanilla" && s != "none") names.push_back(s);
    } else if (mech->is_array()) {
      for (std::size_t i = 0; i < mech->size(); ++i) {
        require((*mech)[i].is_string(), o.where("mechanisms") + "[" + std::to_string(i) + "]",
                "expected a string");
        names.push_back((*mech)[i].get<std::string>());
      }
    } else {
      throw ConfigError(o.where("mechanisms"), "expected a string or an array of strings");
    }
  }
  try {
    m.mechanisms = bundle_from_names(names, opts);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(o.where("mechanisms"), e.what());
  }
  m.mechanisms.lora_rank = opts.lora_rank;
  m.mechanisms.gate = opts.gate;

  if (m.strategy == Strategy::derpp) m.buffer_policy = BufferPolicy::reservoir;
  if (m.strategy == Strategy::gdumb) m.buffer_policy = BufferPolicy::class_balanced_evict_largest;
  if (const json* b = o.find("buffer")) {
    Obj bo(*b, o.where("buffer"));
    require(m.uses_buffer(), o.where("buffer"),
            "strategy " + to_string(m.strategy) + " does not rehearse");
    m.buffer_policy = bo.enumeration("policy", m.buffer_policy, parse_buffer_policy);
    if (bo.has("capacity")) m.buffer_capacity = bo.count("capacity", 0);
    else bo.find("capacity");
    m.new_fraction = bo.number("new_fraction", m.new_fraction);
    require(m.new_fraction > 0.0 && m.new_fraction <= 1.0, bo.where("new_fraction"),
            "must be in (0,1]");
    m.balanced = bo.boolean("balanced", m.balanced);
    if (m.buffer_policy == BufferPolicy::unlimited_cumulative) {
      require(!m.buffer_capacity, bo.where("capacity"), "must be null for the unlimited policy");
    } else {
      require(m.buffer_capacity && *m.buffer_capacity >= 1, bo.where("capacity"),
              "a positive capacity is required for policy " + to_string(m.buffer_policy));
    }
    bo.finish();
  } else if (m.uses_buffer() && m.buffer_policy != BufferPolicy::unlimited_cumulative) {
    throw ConfigError(o.where("buffer.capacity"),
                      "a positive capacity is required for strategy " + to_string(m.strategy));
  }
  if (const json* d = o.find("derpp")) {
    Obj dobj(*d, o.where("derpp"));
    require(m.strategy == Strategy::derpp, o.where("derpp"), "only valid with strategy derpp");
    m.derpp_alpha = dobj.number("alpha", m.derpp_alpha);
    require(m.derpp_alpha >= 0.0, dobj.where("alpha"), "must be >= 0");
    m.derpp_beta = dobj.number("beta", m.derpp_beta);
    require(m.derpp_beta >= 0.0, dobj.where("beta"), "must be >= 0");
    dobj.finish();
  }
  if (const json* l = o.find("lwf")) {
    Obj lo(*l, o.where("lwf"));
    require(m.strategy == Strategy::lwf, o.where("lwf"), "only valid with strategy lwf");
    m.lwf_temperature = lo.number("temperature", m.lwf_temperature);
    require(m.lwf_temperature > 0.0, lo.where("temperature"), "must be > 0");
    m.lwf_lambda = lo.number("lambda", m.lwf_lambda);
    require(m.lwf_lambda >= 0.0, lo.where("lambda"), "must be >= 0");
    lo.finish();
  }
  m.online = o.boolean("online", m.online);
  if (m.online && m.uses_buffer()) {
    require(cfg.session.budget.batch_size >= 2, o.where("online"),
            "online rehearsal needs budget.batch_size >= 2");
  }
  read_optimizer(o, "optimizer", m.lr, m.adamw);
  o.finish();

  if (m.mechanisms.lora) {
    const auto& h = cfg.model.hidden;
    for (std::size_t l = cfg.session.freeze_first_layers; l < h.size(); ++l) {
      std::size_t in = 0;
      if (l > 0) in = h[l - 1];
      else if (cfg.dataset.source == DataSource::synthetic) in = cfg.dataset.synthetic.dims;
      const std::size_t lim = in ? std::min(in, h[l]) : h[l];
      require(2 * m.mechanisms.lora_rank <= lim, path + ".lora_rank",
              "rank " + std::to_string(m.mechanisms.lora_rank) + " exceeds half of layer " +
                  std::to_string(l) + "'s smaller dimension (" + std::to_string(lim) + ")");
    }
  }
  return m;
}

json method_json(const MethodConfig& m) {
  json j;
  j["name"] = m.name;
  j["strategy"] = to_string(m.strategy);
  j["mechanisms"] = m.mechanisms.active_names();
  j["lora_rank"] = m.mechanisms.lora_rank;
  j["soft_target_gate"] = to_string(m.mechanisms.gate);
  if (m.uses_buffer()) {
    j["buffer"] = {{"policy", to_string(m.buffer_policy)},
                   {"capacity", m.buffer_capacity ? json(*m.buffer_capacity) : json(nullptr)},
                   {"new_fraction", m.new_fraction},
                   {"balanced", m.balanced}};
  }
  if (m.strategy == Strategy::derpp) j["derpp"] = {{"alpha", m.derpp_alpha}, {"beta", m.derpp_beta}};
  if (m.strategy == Strategy::lwf) {
    j["lwf"] = {{"temperature", m.lwf_temperature}, {"lambda", m.lwf_lambda}};
  }
  j["online"] = m.online;
  j["optimizer"] = optimizer_json(m.lr, m.adamw);
  return j;
}

}  // namespace

ExperimentConfig parse_config(const json& j, const std::filesystem::path& base_dir) {
  ExperimentConfig c;
  Obj root(j, "");
  c.seed = root.u64("seed", c.seed);
  c.output_dir = root.string("output_dir", c.output_dir);
  c.precision = root.enumeration("precision", c.precision, [](const std::string& s) {
    if (s == "float32") return Precision::float32;
    if (s == "float64") return Precision::float64;
    throw std::invalid_argument("unknown precision '" + s + "' (expected float32|float64)");
  });
  c.dataset = read_dataset(root, base_dir);
  if (c.dataset.synthetic_seed_from_experiment) c.dataset.synthetic.seed = c.seed;
  c.schedule = read_schedule(root);
  if (c.dataset.source == DataSource::synthetic) {
    const auto K = c.dataset.synthetic.classes;
    if (c.schedule.ordering == Ordering::cil) {
      require(c.schedule.pretrain_classes + c.schedule.sessions * c.schedule.classes_per_session <= K,
              "schedule.sessions",
              std::to_string(c.schedule.sessions) + " sessions x " +
                  std::to_string(c.schedule.classes_per_session) + " classes + " +
                  std::to_string(c.schedule.pretrain_classes) + " pretraining classes exceeds " +
                  std::to_string(K) + " classes");
    } else if (!c.schedule.pretrain_fraction) {
      require(c.schedule.pretrain_classes < K, "schedule.pretrain_classes",
              "must be below the class count " + std::to_string(K));
    }
  }

  if (const json* m = root.find("model")) {
    Obj mo(*m, "model");
    if (const json* h = mo.find("hidden")) {
      require(h->is_array() && !h->empty(), mo.where("hidden"), "expected a non-empty array");
      c.model.hidden.clear();
      for (std::size_t i = 0; i < h->size(); ++i) {
        const auto w = Obj::as_count((*h)[i], mo.where("hidden") + "[" + std::to_string(i) + "]");
        require(w >= 1, mo.where("hidden") + "[" + std::to_string(i) + "]", "must be >= 1");
        c.model.hidden.push_back(w);
      }
    }
    c.model.activation = mo.enumeration("activation", c.model.activation, parse_activation);
    c.session.freeze_first_layers = mo.count("freeze_first_layers", 0);
    require(c.session.freeze_first_layers <= c.model.hidden.size(), mo.where("freeze_first_layers"),
            "exceeds the number of hidden layers");
    mo.finish();
  }

  {
    c.pretrain.budget = {1000, 64};
    c.pretrain = read_fit(root, "pretrain", c.pretrain);
  }
  if (const json* b = root.find("budget")) {
    Obj bo(*b, "budget");
    c.session.budget = read_budget(bo, {600, 64}, false);
    bo.finish();
  } else {
    c.session.budget = {600, 64};
  }
  c.session.eval_every = root.count("eval_every", c.session.eval_every);
  require(c.session.eval_every >= 1, "eval_every", "must be >= 1");

  c.joint.fit.budget = {2000, 64};
  if (const json* jt = root.find("joint")) {
    Obj jo(*jt, "joint");
    c.joint.mode = jo.enumeration("mode", c.joint.mode, [](const std::string& s) {
      if (s == "per_prefix") return JointMode::per_prefix;
      if (s == "final_only") return JointMode::final_only;
      throw std::invalid_argument("unknown joint mode '" + s + "' (expected per_prefix|final_only)");
    });
    c.joint.fit.budget = read_budget(jo, c.joint.fit.budget, false);
    read_optimizer(jo, "optimizer", c.joint.fit.lr, c.joint.fit.adamw);
    jo.finish();
  }

  if (const json* r = root.find("recovery_fractions")) {
    require(r->is_array() && !r->empty(), "recovery_fractions", "expected a non-empty array");
    c.recovery_fractions.clear();
    for (std::size_t i = 0; i < r->size(); ++i) {
      const auto field = "recovery_fractions[" + std::to_string(i) + "]";
      require((*r)[i].is_number(), field, "expected a number");
      const double f = (*r)[i].get<double>();
      require(f > 0.0 && f <= 1.0, field, "must be in (0,1]");
      c.recovery_fractions.push_back(f);
    }
  }
  c.best_reference = root.enumeration("best_reference", c.best_reference, [](const std::string& s) {
    if (s == "cohort") return BestReference::cohort;
    if (s == "self") return BestReference::self;
    throw std::invalid_argument("unknown best_reference '" + s + "' (expected cohort|self)");
  });
  c.save_checkpoints = root.boolean("save_checkpoints", c.save_checkpoints);

  const json* methods = root.find("methods");
  require(methods && methods->is_array() && !methods->empty(), "methods",
          "expected a non-empty array");
  std::set<std::string> names;
  for (std::size_t i = 0; i < methods->size(); ++i) {
    const auto path = "methods[" + std::to_string(i) + "]";
    auto m = read_method((*methods)[i], path, c);
    require(names.insert(m.name).second, path + ".name", "duplicate method name '" + m.name + "'");
    c.methods.push_back(std::move(m));
  }
  root.finish();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("<file>", "cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("<file>", std::string("invalid JSON: ") + e.what());
  }
  return parse_config(j, path.parent_path());
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["precision"] = to_string(c.precision);
  json d{{"source", to_string(c.dataset.source)}, {"test_fraction", c.dataset.test_fraction}};
  if (c.dataset.source == DataSource::synthetic) {
    const auto& s = c.dataset.synthetic;
    d["synthetic"] = {{"classes", s.classes},
                      {"dims", s.dims},
                      {"n_per_class", s.n_per_class},
                      {"imbalance_exponent", s.imbalance_exponent},
                      {"class_separation", s.class_separation}};
    if (!c.dataset.synthetic_seed_from_experiment) d["synthetic"]["seed"] = s.seed;
  } else if (c.dataset.source == DataSource::csv) {
    d["path"] = c.dataset.csv_path;
  } else {
    d["images"] = c.dataset.idx_images;
    d["labels"] = c.dataset.idx_labels;
  }
  j["dataset"] = std::move(d);
  json s{{"ordering", to_string(c.schedule.ordering)}, {"sessions", c.schedule.sessions}};
  if (c.schedule.ordering == Ordering::cil) {
    s["pretrain_classes"] = c.schedule.pretrain_classes;
    s["classes_per_session"] = c.schedule.classes_per_session;
  } else {
    if (c.schedule.pretrain_fraction) s["pretrain_fraction"] = *c.schedule.pretrain_fraction;
    else s["pretrain_classes"] = c.schedule.pretrain_classes;
    s["samples_per_session"] = c.schedule.samples_per_session;
  }
  j["schedule"] = std::move(s);
  j["model"] = {{"hidden", c.model.hidden},
                {"activation", to_string(c.model.activation)},
                {"freeze_first_layers", c.session.freeze_first_layers}};
  j["pretrain"] = fit_json(c.pretrain);
  j["budget"] = {{"iterations", c.session.budget.iterations},
                 {"batch_size", c.session.budget.batch_size}};
  j["eval_every"] = c.session.eval_every;
  j["joint"] = fit_json(c.joint.fit);
  j["joint"]["mode"] = to_string(c.joint.mode);
  j["recovery_fractions"] = c.recovery_fractions;
  j["best_reference"] = to_string(c.best_reference);
  j["save_checkpoints"] = c.save_checkpoints;
  json methods = json::array();
  for (const auto& m : c.methods) methods.push_back(method_json(m));
  j["methods"] = std::move(methods);
  return j;
}

std::string config_group_key(const ExperimentConfig& config) {
  auto j = config_to_json(config);
  j.erase("seed");
  j.erase("output_dir");
  return j.dump();
}

}  // namespace sgmlab
