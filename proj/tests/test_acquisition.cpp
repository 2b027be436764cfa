#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "focal/acquisition.hpp"

using namespace focal;

namespace {

MemoryBank bank_at(const std::vector<std::pair<std::string, FeatureVector>>& points, double floor = 1.0) {
  MemoryConfig cfg;
  cfg.threshold = 0.2;
  cfg.variance_floor = floor;
  MemoryBank bank(static_cast<std::uint32_t>(points.front().second.size()), cfg);
  for (const auto& [label, x] : points) bank.ingest(x, label);
  return bank;
}

std::vector<FeatureView> views_of(const std::vector<FeatureVector>& vs) { return {vs.begin(), vs.end()}; }

std::set<std::string> chosen_ids(const Selection& s) {
  std::set<std::string> ids;
  for (auto i : s.chosen) ids.insert(s.scores[i].object_id);
  return ids;
}

// Random pool of multi-view objects around random points.
struct RandomPool {
  std::vector<std::vector<FeatureVector>> storage;
  std::vector<Candidate> pool;
};

RandomPool random_pool(std::mt19937_64& rng, int objects, int views, std::uint32_t dim, double jitter) {
  RandomPool rp;
  std::normal_distribution<double> n(0.0, 1.0);
  rp.storage.resize(objects);
  for (int o = 0; o < objects; ++o) {
    FeatureVector center(dim);
    for (auto& v : center) v = 2 * n(rng);
    for (int v = 0; v < views; ++v) {
      FeatureVector x = center;
      for (auto& c : x) c += jitter * n(rng);
      rp.storage[o].push_back(x);
    }
  }
  for (int o = 0; o < objects; ++o) rp.pool.push_back({"o" + std::to_string(o), views_of(rp.storage[o])});
  return rp;
}

} // namespace

TEST_CASE("entropy helpers") {
  std::vector<double> uniform4(4, 0.25);
  CHECK(entropy(uniform4) == doctest::Approx(std::log(4.0)).epsilon(1e-14));
  std::vector<double> onehot{0.0, 1.0, 0.0};
  CHECK(entropy(onehot) == 0.0);
  std::vector<double> half{0.5, 0.5};
  CHECK(entropy(half) == doctest::Approx(0.693147).epsilon(1e-6));
}

TEST_CASE("view_entropy over the GMM posterior") {
  SUBCASE("uniform posterior over four categories") {
    auto bank = bank_at({{"a", {0.0}}, {"b", {0.0}}, {"c", {0.0}}, {"d", {0.0}}});
    CHECK(std::abs(view_entropy(bank, FeatureVector{0.3}) - std::log(4.0)) <= 1e-12);
  }
  SUBCASE("single category is certain") {
    auto bank = bank_at({{"a", {0.0}}});
    CHECK(view_entropy(bank, FeatureVector{5.0}) == 0.0);
  }
  SUBCASE("equidistant pair") {
    auto bank = bank_at({{"a", {-1.0}}, {"b", {1.0}}});
    CHECK(view_entropy(bank, FeatureVector{0.0}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
}

TEST_CASE("object_entropy is the mean of view entropies") {
  auto bank = bank_at({{"a", {0.0}}, {"b", {0.0}}, {"c", {0.0}}, {"d", {0.0}}, {"e", {40.0}}}, 1e-4);
  // x = 0: four-way tie with "e" underflowing -> ln 4; x = 40: one-hot on "e" -> 0
  std::vector<FeatureVector> vs{{0.0}, {40.0}};
  CHECK(object_entropy(bank, views_of(vs)) == doctest::Approx(std::log(4.0) / 2).epsilon(1e-12));
  std::vector<FeatureVector> same{{0.0}, {0.0}, {0.0}};
  CHECK(object_entropy(bank, views_of(same)) == doctest::Approx(view_entropy(bank, FeatureVector{0.0})));
  std::vector<FeatureVector> one{{0.2}};
  CHECK(object_entropy(bank, views_of(one)) == view_entropy(bank, FeatureVector{0.2}));
}

TEST_CASE("viewpoint inconsistency") {
  std::vector<std::size_t> all_same(8, 3);
  CHECK(inconsistency_from_predictions(all_same) == 1.0);
  std::vector<std::size_t> aabc{0, 0, 1, 2};
  CHECK(inconsistency_from_predictions(aabc) == 2.0);
  std::vector<std::size_t> distinct{0, 1, 2, 3};
  CHECK(inconsistency_from_predictions(distinct) == 4.0);

  auto bank = bank_at({{"a", {0.0}}, {"b", {10.0}}, {"c", {20.0}}});
  std::vector<FeatureVector> vs{{0.1}, {-0.2}, {9.8}, {20.5}};
  CHECK(viewpoint_inconsistency(bank, views_of(vs)) == 2.0);
  auto preds = view_predictions(bank, views_of(vs));
  CHECK(preds == std::vector<std::size_t>{0, 0, 1, 2});

  SUBCASE("underflowed scores tie to the first category") {
    auto sharp = bank_at({{"a", {0.0}}, {"b", {1.0}}}, 1e-6);
    std::vector<FeatureVector> far{{500.0}, {-500.0}};
    CHECK(view_predictions(sharp, views_of(far)) == std::vector<std::size_t>{0, 0});
  }
}

TEST_CASE("combined_score") {
  std::mt19937_64 rng(0);
  AcquisitionConfig cfg;
  cfg.delta = 0.7;
  CHECK(combined_score(cfg, 1.0, 2.0, rng) == doctest::Approx(1.3).epsilon(1e-14));
  cfg.delta = 1.0;
  CHECK(combined_score(cfg, 0.37, 3.0, rng) == 0.37);
  cfg.delta = 0.0;
  CHECK(combined_score(cfg, 0.37, 3.0, rng) == 3.0);
  cfg.mode = AcquisitionMode::entropy_only;
  CHECK(combined_score(cfg, 0.37, 3.0, rng) == 0.37);
  cfg.mode = AcquisitionMode::consistency_only;
  CHECK(combined_score(cfg, 0.37, 3.0, rng) == 3.0);
  cfg.mode = AcquisitionMode::random;
  const double r = combined_score(cfg, 0.37, 3.0, rng);
  CHECK(r >= 0.0);
  CHECK(r < 1.0);

  AcquisitionConfig bad;
  bad.delta = 1.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad.delta = 0.5;
  bad.k = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("select") {
  SUBCASE("ties go to the earliest pool entry") {
    // Three single-view objects: entropies 0, ln2, ln2 -> combined 0.3, 0.3+0.7ln2 twice.
    auto bank = bank_at({{"a", {-1.0}}, {"b", {1.0}}});
    std::vector<FeatureVector> s0{{-30.0}}, s1{{0.0}}, s2{{0.0}};
    std::vector<Candidate> pool{{"p0", views_of(s0)}, {"p1", views_of(s1)}, {"p2", views_of(s2)}};
    AcquisitionConfig cfg;
    auto sel = select(bank, pool, cfg);
    REQUIRE(sel.chosen.size() == 1);
    CHECK(sel.chosen[0] == 1);
    CHECK(sel.scores.size() == 3);
    CHECK(sel.scores[1].combined == doctest::Approx(0.7 * std::log(2.0) + 0.3));
  }
  SUBCASE("empty bank falls back to a seeded random pick") {
    MemoryBank empty(1);
    std::vector<std::vector<FeatureVector>> st(5, std::vector<FeatureVector>{{0.0}});
    std::vector<Candidate> pool;
    for (int i = 0; i < 5; ++i) pool.push_back({"p" + std::to_string(i), views_of(st[i])});
    AcquisitionConfig cfg;
    cfg.selection_seed = 1234;
    auto a = select(empty, pool, cfg);
    auto b = select(empty, pool, cfg);
    CHECK(a.chosen == b.chosen);
    std::set<std::size_t> picks;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      cfg.selection_seed = seed;
      picks.insert(select(empty, pool, cfg).chosen[0]);
    }
    CHECK(picks.size() == 5);
  }
  SUBCASE("pool smaller than k") {
    MemoryBank empty(1);
    std::vector<FeatureVector> s{{0.0}};
    std::vector<Candidate> pool{{"p", views_of(s)}};
    AcquisitionConfig cfg;
    cfg.k = 2;
    CHECK_THROWS_AS(select(empty, pool, cfg), std::invalid_argument);
  }
  SUBCASE("a novel category wins over known ones") {
    // Known categories are well separated; the candidate from an unseen
    // category sits between two of them.
    auto bank = bank_at({{"a", {0, 0}}, {"b", {4, 0}}, {"c", {0, 4}}});
    std::vector<FeatureVector> known_a{{0.1, 0.0}, {-0.1, 0.1}, {0.0, -0.1}};
    std::vector<FeatureVector> known_b{{4.1, 0.0}, {3.9, 0.1}, {4.0, -0.1}};
    std::vector<FeatureVector> novel{{2.0, 2.1}, {2.1, 1.9}, {1.9, 2.0}};
    std::vector<Candidate> pool{{"a1", views_of(known_a)}, {"nov", views_of(novel)}, {"b1", views_of(known_b)}};

    // Brute-force combined score straight from the kernel definition.
    auto brute = [&](const std::vector<FeatureVector>& views) {
      const std::vector<std::pair<double, double>> centers{{0, 0}, {4, 0}, {0, 4}};
      double h = 0;
      std::vector<int> votes(3, 0);
      for (const auto& v : views) {
        std::vector<double> s;
        for (auto [cx, cy] : centers) {
          s.push_back(std::exp(-0.5 * ((v[0] - cx) * (v[0] - cx) + (v[1] - cy) * (v[1] - cy))));
        }
        const double z = s[0] + s[1] + s[2];
        for (double si : s) h -= si / z * std::log(si / z);
        ++votes[std::max_element(s.begin(), s.end()) - s.begin()];
      }
      h /= views.size();
      const double inc = views.size() / static_cast<double>(*std::max_element(votes.begin(), votes.end()));
      return 0.7 * h + 0.3 * inc;
    };
    AcquisitionConfig cfg;
    auto sel = select(bank, pool, cfg);
    CHECK(sel.scores[0].combined == doctest::Approx(brute(known_a)).epsilon(1e-12));
    CHECK(sel.scores[1].combined == doctest::Approx(brute(novel)).epsilon(1e-12));
    CHECK(sel.scores[2].combined == doctest::Approx(brute(known_b)).epsilon(1e-12));
    CHECK(sel.chosen[0] == 1);
    CHECK(sel.scores[1].per_view_predictions.size() == 3);
  }
  SUBCASE("classifier view predictor") {
    auto bank = bank_at({{"a", {0.0}}, {"b", {4.0}}});
    ClassifierHead head(1);
    std::vector<std::string> labels{"a", "b"};
    head.expand(labels);
    head.weights()[1] = 1.0;
    std::vector<FeatureVector> vs{{-1.0}, {1.0}};
    std::vector<Candidate> pool{{"p", views_of(vs)}};
    AcquisitionConfig cfg;
    cfg.predictor = ViewPredictor::classifier;
    auto sel = select(bank, pool, cfg, &head);
    CHECK(sel.scores[0].per_view_predictions == std::vector<std::string>{"a", "b"});
    CHECK(sel.scores[0].inconsistency == 2.0);
    CHECK_THROWS_AS(select(bank, pool, cfg, nullptr), std::invalid_argument);
  }
}

TEST_CASE("property: degenerate weights reproduce the single-term rankings") {
  std::mt19937_64 rng(4242);
  for (int trial = 0; trial < 100; ++trial) {
    auto bank = bank_at({{"a", {0, 0, 0}}, {"b", {2, 0, 0}}, {"c", {0, 2, 0}}, {"d", {0, 0, 2}}},
                        std::uniform_real_distribution<double>(0.1, 2.0)(rng));
    auto rp = random_pool(rng, 6, 4, 3, 0.8);
    AcquisitionConfig combined;
    combined.k = std::uniform_int_distribution<int>(1, 3)(rng);
    combined.selection_seed = trial;

    AcquisitionConfig only = combined;
    combined.delta = 1.0;
    only.mode = AcquisitionMode::entropy_only;
    CHECK(chosen_ids(select(bank, rp.pool, combined)) == chosen_ids(select(bank, rp.pool, only)));

    combined.delta = 0.0;
    only.mode = AcquisitionMode::consistency_only;
    CHECK(chosen_ids(select(bank, rp.pool, combined)) == chosen_ids(select(bank, rp.pool, only)));

    combined.delta = 0.7;
    auto sel = select(bank, rp.pool, combined);
    CHECK(sel.chosen == select(bank, rp.pool, combined).chosen);
    for (const auto& s : sel.scores) {
      CHECK(s.mean_entropy >= 0.0);
      CHECK(s.mean_entropy <= std::log(4.0) + 1e-12);
      CHECK(s.inconsistency >= 1.0);
      CHECK(s.inconsistency <= 4.0);
      CHECK(s.combined == doctest::Approx(0.7 * s.mean_entropy + 0.3 * s.inconsistency));
    }
  }
}

TEST_CASE("property: raising an object's entropy never lowers its rank") {
  std::mt19937_64 rng(17);
  AcquisitionConfig cfg;
  for (int trial = 0; trial < 200; ++trial) {
    cfg.delta = std::uniform_real_distribution<double>(0.01, 1.0)(rng);
    std::uniform_real_distribution<double> h(0.0, 2.0), inc(1.0, 4.0);
    std::vector<std::pair<double, double>> terms(6);
    for (auto& t : terms) t = {h(rng), inc(rng)};
    auto rank_of_zero = [&]() {
      const double mine = combined_score(cfg, terms[0].first, terms[0].second, rng);
      int rank = 0;
      for (std::size_t i = 1; i < terms.size(); ++i) {
        rank += combined_score(cfg, terms[i].first, terms[i].second, rng) > mine;
      }
      return rank;
    };
    const int before = rank_of_zero();
    terms[0].first += h(rng);
    CHECK(rank_of_zero() <= before);
  }
}
