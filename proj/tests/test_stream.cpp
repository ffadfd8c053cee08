#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "sgmlab/stream.hpp"
#include "support.hpp"

using namespace sgmlab;

TEST_CASE("csv labels are densified in order of appearance") {
  std::istringstream in("f0,f1,label\n1.5,2,cat\n-3,4e-1,dog\n0,0,cat\n");
  const auto d = parse_csv(in);
  CHECK(d.size() == 3);
  CHECK(d.labels == std::vector<std::size_t>{0, 1, 0});
  CHECK(d.class_names == std::vector<std::string>{"cat", "dog"});
  CHECK(d.features(1, 1) == 0.4);
}

TEST_CASE("csv rejects malformed input") {
  std::istringstream empty("f0,f1,label\n");
  CHECK_THROWS_WITH_AS(parse_csv(empty), doctest::Contains("no samples"), DataError);
  std::istringstream ragged("f0,f1,label\n1,2,a\n3,b\n");
  CHECK_THROWS_AS(parse_csv(ragged), DataError);
  std::istringstream text("f0,f1,label\n1,x,a\n");
  CHECK_THROWS_AS(parse_csv(text), DataError);
}

TEST_CASE("csv export round trip") {
  const auto d = testing::blobs(3, 7, 4, 11);
  const auto dir = testing::scratch_dir("csv");
  export_csv(d, dir / "d.csv");
  const auto back = load_csv(dir / "d.csv");
  CHECK(back.labels == d.labels);
  for (std::size_t i = 0; i < d.features.size(); ++i) {
    CHECK(std::abs(back.features.data()[i] - d.features.data()[i]) <= 1e-12);
  }
}

namespace {

void write_idx(const std::filesystem::path& p, std::vector<std::uint32_t> dims,
               const std::vector<unsigned char>& payload) {
  std::ofstream out(p, std::ios::binary);
  const unsigned char magic[4] = {0, 0, 0x08, static_cast<unsigned char>(dims.size())};
  out.write(reinterpret_cast<const char*>(magic), 4);
  for (auto d : dims) {
    const unsigned char be[4] = {static_cast<unsigned char>(d >> 24), static_cast<unsigned char>(d >> 16),
                                 static_cast<unsigned char>(d >> 8), static_cast<unsigned char>(d)};
    out.write(reinterpret_cast<const char*>(be), 4);
  }
  out.write(reinterpret_cast<const char*>(payload.data()), std::streamsize(payload.size()));
}

}  // namespace

TEST_CASE("idx fixtures") {
  const auto dir = testing::scratch_dir("idx");
  SUBCASE("pixel scaling") {
    write_idx(dir / "img", {1, 2, 2}, {0, 255, 0, 255});
    write_idx(dir / "lab", {1}, {7});
    const auto d = load_idx(dir / "img", dir / "lab");
    CHECK(d.features.values() == std::vector<double>{0, 1, 0, 1});
    CHECK(d.labels == std::vector<std::size_t>{0});
  }
  SUBCASE("dimensions are big-endian") {
    std::vector<unsigned char> pix(2 * 28 * 28, 128);
    write_idx(dir / "img", {2, 28, 28}, pix);
    write_idx(dir / "lab", {2}, {3, 1});
    const auto d = load_idx(dir / "img", dir / "lab");
    CHECK(d.dims() == 784);
    CHECK(d.labels == std::vector<std::size_t>{1, 0});
  }
  SUBCASE("count mismatch") {
    write_idx(dir / "img", {2, 2, 2}, std::vector<unsigned char>(8, 1));
    write_idx(dir / "lab", {3}, {0, 1, 2});
    CHECK_THROWS_AS(load_idx(dir / "img", dir / "lab"), DataError);
  }
  SUBCASE("truncated payload") {
    write_idx(dir / "img", {2, 2, 2}, std::vector<unsigned char>(5, 1));
    write_idx(dir / "lab", {2}, {0, 1});
    CHECK_THROWS_AS(load_idx(dir / "img", dir / "lab"), DataError);
  }
}

TEST_CASE("synthetic class sizes") {
  SyntheticSpec s;
  s.classes = 5;
  s.n_per_class = 100;
  s.imbalance_exponent = 1.0;
  CHECK(synthetic_class_sizes(s) == std::vector<std::size_t>{100, 50, 34, 25, 20});
  s.imbalance_exponent = 0.0;
  CHECK(synthetic_class_sizes(s) == std::vector<std::size_t>(5, 100));
  s.seed = 4;
  s.n_per_class = 10;
  const auto a = generate_synthetic(s);
  const auto b = generate_synthetic(s);
  CHECK(a.fingerprint() == b.fingerprint());
  CHECK(a.features == b.features);
  s.seed = 5;
  CHECK(generate_synthetic(s).fingerprint() != a.fingerprint());
}

TEST_CASE("holdout split is per class") {
  const auto d = testing::blobs(4, 10, 3, 1);
  std::mt19937_64 rng(2);
  const auto split = holdout_split(d, 0.25, rng);
  CHECK(split.test.size() == 4 * 2);
  CHECK(split.train.size() + split.test.size() == d.size());
  std::set<std::size_t> all(split.train.begin(), split.train.end());
  for (auto i : split.test) CHECK(all.insert(i).second);
}

TEST_CASE("class-incremental schedules") {
  std::mt19937_64 rng(3);
  SUBCASE("singleton sessions") {
    const auto d = testing::blobs(10, 5, 2, 3);
    const auto s = make_cil_schedule(d, testing::iota_indices(d.size()), 5, 5, 1, rng);
    CHECK(s.num_sessions() == 6);
    CHECK(s.sessions[0].classes == std::vector<std::size_t>{0, 1, 2, 3, 4});
    std::set<std::size_t> seen(s.sessions[0].classes.begin(), s.sessions[0].classes.end());
    for (std::size_t j = 1; j < 6; ++j) {
      CHECK(s.sessions[j].classes.size() == 1);
      CHECK(seen.insert(s.sessions[j].classes[0]).second);
    }
  }
  SUBCASE("large analogue: 365 classes in 5 sessions of 73") {
    const auto d = testing::blobs(400, 2, 2, 4);
    const auto s = make_cil_schedule(d, testing::iota_indices(d.size()), 35, 5, 73, rng);
    for (std::size_t j = 1; j < 6; ++j) CHECK(s.sessions[j].classes.size() == 73);
  }
  SUBCASE("pairwise disjoint label sets on random data") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      std::mt19937_64 r(seed);
      const std::size_t K = 6 + r() % 20;
      const auto d = testing::blobs(K, 3, 2, seed);
      const std::size_t pre = 1 + r() % (K / 2);
      const std::size_t per = 1 + r() % ((K - pre) / 2);
      const std::size_t n = (K - pre) / per;
      const auto s = make_cil_schedule(d, testing::iota_indices(d.size()), pre, n, per, r);
      for (std::size_t a = 0; a < s.num_sessions(); ++a) {
        for (std::size_t b = a + 1; b < s.num_sessions(); ++b) {
          for (auto c : s.sessions[a].classes) {
            CHECK(std::find(s.sessions[b].classes.begin(), s.sessions[b].classes.end(), c) ==
                  s.sessions[b].classes.end());
          }
        }
      }
    }
  }
  SUBCASE("too many sessions") {
    const auto d = testing::blobs(6, 3, 2, 5);
    CHECK_THROWS(make_cil_schedule(d, testing::iota_indices(d.size()), 3, 2, 2, rng));
  }
}

TEST_CASE("iid schedules") {
  std::mt19937_64 rng(6);
  SUBCASE("disjoint cover of the post-pretraining samples") {
    const auto d = testing::blobs(6, 20, 2, 7);
    const auto s = make_iid_schedule(d, testing::iota_indices(d.size()), PretrainSplit{1, {}}, 5, 0, rng);
    std::set<std::size_t> cover;
    for (std::size_t j = 1; j < 6; ++j) {
      CHECK(s.sessions[j].samples.size() == 20);
      for (auto i : s.sessions[j].samples) CHECK(cover.insert(i).second);
    }
    CHECK(cover.size() == 100);
    for (auto i : s.sessions[0].samples) CHECK(cover.count(i) == 0);
  }
  SUBCASE("sessions follow the global class histogram") {
    // Chi-square goodness of fit, 10 classes (9 dof): 0.99 quantile is 21.666.
    std::size_t rejections = 0, tests = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      SyntheticSpec spec;
      spec.classes = 10;
      spec.n_per_class = 200;
      spec.imbalance_exponent = 0.7;
      spec.seed = seed;
      const auto d = generate_synthetic(spec);
      std::mt19937_64 r(seed);
      const auto s = make_iid_schedule(d, testing::iota_indices(d.size()), PretrainSplit{0, 0.5}, 5, 0, r);
      const auto global = d.class_counts();
      for (std::size_t j = 1; j < 6; ++j) {
        std::vector<double> obs(10, 0.0);
        for (auto i : s.sessions[j].samples) obs[d.labels[i]] += 1.0;
        const double n = double(s.sessions[j].samples.size());
        double chi2 = 0.0;
        for (std::size_t k = 0; k < 10; ++k) {
          const double e = n * double(global[k]) / double(d.size());
          chi2 += (obs[k] - e) * (obs[k] - e) / e;
        }
        ++tests;
        if (chi2 > 21.666) ++rejections;
      }
    }
    CHECK(tests == 50);
    CHECK(rejections <= 2);
  }
}

TEST_CASE("schedule json round trip") {
  std::mt19937_64 rng(8);
  const auto d = testing::blobs(8, 4, 2, 9);
  const auto s = make_cil_schedule(d, testing::iota_indices(d.size()), 4, 2, 2, rng);
  const auto back = schedule_from_json(schedule_to_json(s));
  CHECK(back.num_sessions() == s.num_sessions());
  for (std::size_t j = 0; j < s.num_sessions(); ++j) {
    CHECK(back.sessions[j].samples == s.sessions[j].samples);
    CHECK(back.sessions[j].classes == s.sessions[j].classes);
  }
}
