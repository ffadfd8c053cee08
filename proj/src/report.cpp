#include "sgmlab/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

namespace sgmlab {

using nlohmann::json;

namespace {

std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

json parse_file(const std::filesystem::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

struct Stat {
  double mean = 0.0;
  double std = 0.0;
};

Stat stat(const std::vector<double>& v) {
  Stat s;
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= double(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / double(v.size() - 1));
  }
  return s;
}

std::string pad(const std::string& s, std::size_t w) {
  return s.size() >= w ? s : s + std::string(w - s.size(), ' ');
}

}  // namespace

RunRecord load_run(const std::filesystem::path& dir) {
  RunRecord r;
  r.dir = dir;
  const auto summary = parse_file(dir / "summary.json");
  const auto metrics = parse_file(dir / "metrics.json");
  const auto config = parse_config(parse_file(dir / "config.json"));
  r.method = summary.at("method").get<std::string>();
  r.seed = summary.at("seed").get<std::uint64_t>();
  r.sigma = summary.at("sigma").get<double>();
  r.joint_refs_hash = summary.at("joint_refs_hash").get<std::string>();
  r.group_key = config_group_key(config);

  const auto refs_text = read_text(dir / "joint_refs.json");
  if (hex64(fnv1a(refs_text)) != r.joint_refs_hash) {
    throw std::runtime_error(dir.string() + ": joint_refs.json does not match the hash recorded "
                                            "in summary.json");
  }
  r.joints = joint_refs_from_json(json::parse(refs_text));

  r.ledger = MetricLedger::from_csv(read_text(dir / "ledger.csv"));
  for (auto j : r.ledger.sessions()) r.ledger.set_joint(j, r.joints.for_session(j));
  if (metrics.at("best_reference").get<std::string>() == "self") {
    r.ledger.use_self_best();
  } else {
    for (auto it = metrics.at("best_new").begin(); it != metrics.at("best_new").end(); ++it) {
      r.ledger.set_best(std::stoul(it.key()), it->get<double>());
    }
  }
  return r;
}

RunRow score_run(const RunRecord& run) {
  RunRow row;
  row.method = run.method;
  row.seed = run.seed;
  row.s_delta = stability_gap(run.ledger).value;
  row.p_delta = plasticity_gap(run.ledger).value;
  row.ck_delta = continual_knowledge_gap(run.ledger).value;
  row.sigma = run.sigma;
  const auto sessions = run.ledger.sessions();
  double mu = 0.0;
  for (auto j : sessions) mu += run.ledger.session_rows(j).back().acc_all;
  row.mu = sessions.empty() ? 0.0 : mu / double(sessions.size());
  row.alpha = run.ledger.rows().empty() ? 0.0 : run.ledger.rows().back().acc_all;
  row.self_best = run.ledger.self_referenced_best();
  row.joint_mode = run.joints.mode;
  return row;
}

std::vector<std::pair<std::size_t, double>> session_averaged_old(const MetricLedger& ledger) {
  std::vector<std::pair<std::size_t, double>> out;
  const auto sessions = ledger.sessions();
  if (sessions.empty()) return out;
  const auto first = ledger.session_rows(sessions.front());
  for (auto j : sessions) {
    const auto rows = ledger.session_rows(j);
    if (rows.size() != first.size()) return {};
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].step != first[i].step) return {};
    }
  }
  for (std::size_t i = 0; i < first.size(); ++i) {
    double s = 0.0;
    for (auto j : sessions) s += ledger.session_rows(j)[i].acc_old;
    out.emplace_back(first[i].step, s / double(sessions.size()));
  }
  return out;
}

Report build_report(const std::vector<RunRecord>& runs,
                    const std::optional<std::string>& joint_refs_text) {
  if (runs.empty()) throw std::invalid_argument("report: no run directories");
  if (joint_refs_text) {
    const auto h = hex64(fnv1a(*joint_refs_text));
    for (const auto& r : runs) {
      if (r.joint_refs_hash != h) {
        throw std::invalid_argument("report: " + r.dir.string() +
                                    " was normalized with different joint references (hash " +
                                    r.joint_refs_hash + ", expected " + h + ")");
      }
    }
  }
  // Runs over the same stream must share one universal reference.
  std::map<std::string, std::string> refs_by_stream;
  for (const auto& r : runs) {
    const auto stream = r.joints.data_fingerprint + "/" + r.joints.schedule_hash;
    auto [it, inserted] = refs_by_stream.try_emplace(stream, r.joint_refs_hash);
    if (!inserted && it->second != r.joint_refs_hash) {
      throw std::invalid_argument("report: runs on the same stream use inconsistent joint "
                                  "references (" + r.dir.string() + ")");
    }
  }

  Report rep;
  std::vector<RunRow> rows;
  std::set<std::string> labels;
  for (const auto& r : runs) {
    auto row = score_run(r);
    row.label = r.method + "-seed" + std::to_string(r.seed);
    for (int k = 2; labels.count(row.label); ++k) {
      row.label = r.method + "-seed" + std::to_string(r.seed) + "-" + std::to_string(k);
    }
    labels.insert(row.label);
    rows.push_back(std::move(row));
  }

  std::ostringstream text;
  text << "Per-run metrics (gaps: lower is better; sigma/mu/alpha are accuracies)\n";
  text << pad("run", 28) << pad("S_delta", 10) << pad("P_delta", 10) << pad("CK_delta", 10)
       << pad("sigma", 10) << pad("mu", 10) << pad("alpha", 10) << "flags\n";
  json runs_json = json::array();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    std::string flags;
    if (r.self_best) flags += "self-referenced-best ";
    if (r.joint_mode == JointMode::final_only) flags += "final-only-joint";
    text << pad(r.label, 28) << pad(fixed(r.s_delta), 10) << pad(fixed(r.p_delta), 10)
         << pad(fixed(r.ck_delta), 10) << pad(fixed(r.sigma), 10) << pad(fixed(r.mu), 10)
         << pad(fixed(r.alpha), 10) << flags << "\n";
    runs_json.push_back({{"label", r.label},
                         {"dir", runs[i].dir.generic_string()},
                         {"method", r.method},
                         {"seed", r.seed},
                         {"S_delta", r.s_delta},
                         {"P_delta", r.p_delta},
                         {"CK_delta", r.ck_delta},
                         {"sigma", r.sigma},
                         {"mu", r.mu},
                         {"alpha", r.alpha},
                         {"self_referenced_best", r.self_best},
                         {"joint_mode", to_string(r.joint_mode)}});

    const auto curve = session_averaged_old(runs[i].ledger);
    std::ostringstream csv;
    if (!curve.empty()) {
      csv << "step,acc_old\n";
      for (const auto& [step, a] : curve) csv << step << ',' << fmt(a) << '\n';
      rep.files["curves/" + r.label + ".csv"] = csv.str();
    }
  }

  // Seed replicates: identical resolved config apart from the seed.
  std::vector<std::string> group_order;
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    auto [it, inserted] = groups.try_emplace(runs[i].group_key);
    if (inserted) group_order.push_back(runs[i].group_key);
    it->second.push_back(i);
  }
  text << "\nSeed-grouped mean +/- std\n";
  text << pad("method", 20) << pad("n", 4) << pad("S_delta", 20) << pad("P_delta", 20)
       << pad("CK_delta", 20) << pad("sigma", 20) << pad("mu", 20) << "alpha\n";
  json groups_json = json::array();
  std::map<std::string, int> group_names;
  for (const auto& key : group_order) {
    const auto& members = groups[key];
    auto collect = [&](double RunRow::*f) {
      std::vector<double> v;
      for (auto i : members) v.push_back(rows[i].*f);
      return stat(v);
    };
    const std::string method = rows[members.front()].method;
    std::string name = method;
    if (int n = group_names[method]++; n > 0) name += "-" + std::to_string(n + 1);
    json g{{"group", name}, {"method", method}, {"runs", members.size()}};
    json seeds = json::array();
    for (auto i : members) seeds.push_back(rows[i].seed);
    g["seeds"] = std::move(seeds);
    text << pad(name, 20) << pad(std::to_string(members.size()), 4);
    const std::pair<const char*, double RunRow::*> cols[] = {
        {"S_delta", &RunRow::s_delta}, {"P_delta", &RunRow::p_delta},
        {"CK_delta", &RunRow::ck_delta}, {"sigma", &RunRow::sigma},
        {"mu", &RunRow::mu}, {"alpha", &RunRow::alpha}};
    for (std::size_t c = 0; c < std::size(cols); ++c) {
      const auto s = collect(cols[c].second);
      g[cols[c].first] = {{"mean", s.mean}, {"std", s.std}};
      const auto cell = fixed(s.mean) + " +/- " + fixed(s.std);
      text << (c + 1 < std::size(cols) ? pad(cell, 20) : cell);
    }
    text << "\n";

    // Group-averaged session curve, when every member has the same steps.
    std::vector<std::vector<std::pair<std::size_t, double>>> curves;
    for (auto i : members) curves.push_back(session_averaged_old(runs[i].ledger));
    bool aligned = !curves.front().empty();
    for (const auto& c : curves) {
      if (c.size() != curves.front().size()) aligned = false;
      for (std::size_t k = 0; aligned && k < c.size(); ++k) {
        aligned = c[k].first == curves.front()[k].first;
      }
    }
    if (aligned) {
      std::ostringstream csv;
      csv << "step,mean_acc_old,std_acc_old\n";
      for (std::size_t k = 0; k < curves.front().size(); ++k) {
        std::vector<double> v;
        for (const auto& c : curves) v.push_back(c[k].second);
        const auto s = stat(v);
        csv << curves.front()[k].first << ',' << fmt(s.mean) << ',' << fmt(s.std) << '\n';
      }
      rep.files["curves/group_" + name + ".csv"] = csv.str();
    }
    groups_json.push_back(std::move(g));
  }

  // Rankings within each stream (shared joint references).
  json rankings = json::array();
  std::map<std::string, std::vector<std::size_t>> by_stream;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    by_stream[runs[i].joints.data_fingerprint + "/" + runs[i].joints.schedule_hash].push_back(i);
  }
  for (const auto& [stream, members] : by_stream) {
    if (members.size() < 2) continue;
    std::vector<std::pair<std::string, const MetricLedger*>> cmp;
    for (auto i : members) cmp.emplace_back(rows[i].label, &runs[i].ledger);
    const auto c = compare_runs(cmp);
    json per{{"stream", stream}};
    for (const auto& m : c.rankings) {
      json order = json::array();
      for (std::size_t k = 0; k < m.order.size(); ++k) {
        order.push_back({{"run", m.order[k].first}, {"value", m.order[k].second}, {"rank", m.ranks[k]}});
      }
      per[m.metric] = std::move(order);
    }
    rankings.push_back(std::move(per));
  }

  rep.text = text.str();
  rep.json = {{"runs", std::move(runs_json)},
              {"groups", std::move(groups_json)},
              {"rankings", std::move(rankings)}};
  return rep;
}

}  // namespace sgmlab
