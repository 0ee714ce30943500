#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "ltc/data.hpp"
#include "ltc/diagnostics.hpp"
#include "ltc/reference.hpp"
#include "test_support.hpp"

using namespace ltc;
using test::axis;

TEST_CASE("detect_easy_positives") {
  // Anchor (1,0), positives {(1,0),(0,1)}: pbar = (0.7071,0.7071),
  // similarities 1.0 and 0.0 against threshold 0.7071.
  std::vector<Embedding> entries;
  entries.push_back(Embedding{{1.0, 0.0}, 0, 0});
  entries.push_back(Embedding{{1.0, 0.0}, 0, 1});
  entries.push_back(Embedding{{0.0, 1.0}, 0, 2});
  entries.push_back(Embedding{{-1.0, 0.0}, 1, 0});
  auto batch = build_batch(std::move(entries), {{0, 5}, {1, 5}});
  const auto flags = detect_easy_positives(batch, 0);
  REQUIRE(flags.size() == 2);
  CHECK(flags[0]);
  CHECK_FALSE(flags[1]);

  // Single positive equals the mean: not easy.
  std::vector<Embedding> single;
  single.push_back(Embedding{{1.0, 0.0}, 0, 0});
  single.push_back(Embedding{{0.0, 1.0}, 0, 1});
  single.push_back(Embedding{{-1.0, 0.0}, 1, 0});
  auto sbatch = build_batch(std::move(single), {{0, 5}, {1, 5}});
  CHECK_FALSE(detect_easy_positives(sbatch, 0)[0]);

  // All positives identical: all flags false.
  std::vector<Embedding> same;
  same.push_back(Embedding{{1.0, 0.0}, 0, 0});
  same.push_back(Embedding{{0.0, 1.0}, 0, 1});
  same.push_back(Embedding{{0.0, 1.0}, 0, 2});
  same.push_back(Embedding{{-1.0, 0.0}, 1, 0});
  auto ibatch = build_batch(std::move(same), {{0, 5}, {1, 5}});
  for (bool f : detect_easy_positives(ibatch, 0)) CHECK_FALSE(f);
}

TEST_CASE("conflict ratios: all-attractive batch reports zero") {
  // Orthogonal geometry: q = 1/|A| < 1/|P| for every positive.
  std::vector<Embedding> entries;
  for (int k = 0; k < 3; ++k)
    entries.push_back(Embedding{axis(8, static_cast<std::size_t>(k)), 0, k});
  for (int k = 0; k < 4; ++k)
    entries.push_back(Embedding{axis(8, 3 + static_cast<std::size_t>(k)), 1, k});
  auto batch = build_batch(std::move(entries), {{0, 5}, {1, 5}});
  const auto report = conflict_ratio_per_class({&batch, 1}, Temperature(1.0));
  for (const auto& [cls, st] : report.per_class) {
    CHECK(st.repulsive == 0);
    CHECK(st.conflict_ratio == 0.0);
  }
}

TEST_CASE("conflict ratio 1/3 from paired duplicates") {
  // Class 0 holds two duplicate pairs {z,z,w,w}; each anchor repels its
  // duplicate and attracts the two cross entries: 4 of 12 pairs conflict.
  std::vector<Embedding> entries;
  entries.push_back(Embedding{axis(6, 0), 0, 0});
  entries.push_back(Embedding{axis(6, 0), 0, 1});
  entries.push_back(Embedding{axis(6, 1), 0, 2});
  entries.push_back(Embedding{axis(6, 1), 0, 3});
  entries.push_back(Embedding{axis(6, 2), 1, 0});
  entries.push_back(Embedding{axis(6, 3), 1, 1});
  auto batch = build_batch(std::move(entries), {{0, 5}, {1, 5}});
  const auto report = conflict_ratio_per_class({&batch, 1}, Temperature(0.25));
  const auto& st = report.per_class.at(0);
  CHECK(st.pos_pairs == 12);
  CHECK(st.repulsive == 4);
  CHECK(st.conflict_ratio == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  // Exact agreement with the naive recount.
  const auto recount = ref::conflict_recount(batch, 0.25);
  CHECK(recount.at(0).first == st.pos_pairs);
  CHECK(recount.at(0).second == st.repulsive);
}

TEST_CASE("conflict ratios match the recount oracle on random batches") {
  Rng rng(4242);
  for (int trial = 0; trial < 50; ++trial) {
    auto batch = test::random_batch(rng, 2 + static_cast<int>(rng.bounded(4)), 5);
    const auto report = conflict_ratio_per_class({&batch, 1}, Temperature(0.1));
    const auto recount = ref::conflict_recount(batch, 0.1);
    for (const auto& [cls, want] : recount) {
      const auto& st = report.per_class.at(cls);
      CHECK(st.pos_pairs == want.first);
      CHECK(st.repulsive == want.second);
    }
  }
  CHECK_THROWS_AS(conflict_ratio_per_class({}, Temperature(0.1)),
                  std::invalid_argument);
}

TEST_CASE("positive_pair_count") {
  CHECK(positive_pair_count(2, 3) == 30);
  CHECK(positive_pair_count(4, 3) == 132);
  CHECK(positive_pair_count(1, 1) == 0);
  CHECK(positive_pair_count(1, 0) == 0);

  // Exactly quadratic: count(m, n) == (mn)^2 - mn; monotone in both args.
  for (std::int64_t m = 1; m <= 6; ++m)
    for (std::int64_t n = 0; n <= 20; ++n) {
      CHECK(positive_pair_count(m, n) == m * n * m * n - m * n);
      if (n > 0) CHECK(positive_pair_count(m, n) >= positive_pair_count(m, n - 1));
      if (m > 1) CHECK(positive_pair_count(m, n) >= positive_pair_count(m - 1, n));
    }
}

TEST_CASE("conflict_increment_estimate") {
  CHECK(conflict_increment_estimate(4, 3, 0.5) == doctest::Approx(51.0));
  CHECK(conflict_increment_estimate(2, 7, 0.9) == 0.0);
  CHECK(conflict_increment_estimate(4, 3, 0.0) == 0.0);
  CHECK_THROWS_AS(conflict_increment_estimate(1, 3, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(conflict_increment_estimate(4, 3, 1.5), std::invalid_argument);
}

TEST_CASE("attraction_repulsion_balance") {
  // Two classes with four entries each.
  {
    std::vector<Embedding> entries;
    for (int k = 0; k < 4; ++k)
      entries.push_back(Embedding{axis(8, static_cast<std::size_t>(k)), 0, k});
    for (int k = 0; k < 4; ++k)
      entries.push_back(Embedding{axis(8, 4 + static_cast<std::size_t>(k)), 1, k});
    auto batch = build_batch(std::move(entries), {{0, 5}, {1, 5}});
    const auto rows = attraction_repulsion_balance(batch);
    for (const auto& [cls, row] : rows) {
      CHECK(row.positive_pairs == 12);
      CHECK(row.negative_pairs == 16);
      CHECK(row.ratio == doctest::Approx(0.75).epsilon(1e-12));
    }
  }

  // Single class: no negatives, +inf sentinel.
  {
    std::vector<Embedding> entries;
    entries.push_back(Embedding{axis(2, 0), 0, 0});
    entries.push_back(Embedding{axis(2, 1), 0, 1});
    auto batch = build_batch(std::move(entries), {{0, 5}});
    const auto rows = attraction_repulsion_balance(batch);
    CHECK(rows.at(0).negative_pairs == 0);
    CHECK(std::isinf(rows.at(0).ratio));
  }

  // Imbalanced 6-vs-2.
  {
    std::vector<Embedding> entries;
    for (int k = 0; k < 6; ++k)
      entries.push_back(Embedding{axis(8, static_cast<std::size_t>(k)), 0, k});
    for (int k = 0; k < 2; ++k)
      entries.push_back(Embedding{axis(8, 6 + static_cast<std::size_t>(k)), 1, k});
    auto batch = build_batch(std::move(entries), {{0, 6}, {1, 2}});
    const auto rows = attraction_repulsion_balance(batch);
    CHECK(rows.at(0).positive_pairs == 30);
    CHECK(rows.at(0).negative_pairs == 12);
    CHECK(rows.at(1).positive_pairs == 2);
    CHECK(rows.at(1).negative_pairs == 12);

    const auto w = batch_negative_weights(batch);
    const auto weighted = attraction_repulsion_balance(batch, &w);
    REQUIRE(weighted.at(0).weighted_negative_mass.has_value());
    CHECK(*weighted.at(0).weighted_negative_mass > 0.0);
  }
}

TEST_CASE("spearman rank correlation") {
  const std::vector<double> x{1, 2, 3, 4, 5};
  const std::vector<double> inc{2, 4, 9, 16, 30};
  const std::vector<double> dec{5, 4, 3, 2, 1};
  CHECK(spearman(x, inc) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(spearman(x, dec) == doctest::Approx(-1.0).epsilon(1e-12));
  const std::vector<double> ties{1, 1, 2, 2, 3};
  CHECK(spearman(ties, ties) == doctest::Approx(1.0).epsilon(1e-12));
  const std::vector<double> flat{7, 7, 7, 7, 7};
  CHECK(spearman(x, flat) == 0.0);
}

TEST_CASE("head class dominates positive-pair mass in long-tailed batches") {
  LongTailedDatasetSpec spec;
  spec.classes = 10;
  spec.head_count = 200;
  spec.imbalance_factor = 100.0;
  spec.input_dim = 8;
  spec.center_separation = 3.0;
  spec.within_stddev = 0.5;
  spec.test_per_class = 2;
  spec.seed = 31;
  const auto ds = sample_dataset(spec);
  ViewPolicy policy;
  policy.noise_scales = {0.05, 0.1, 0.15, 0.2};
  policy = policy.uniform(2);  // plain two-view batches

  int head_wins = 0;
  const int batches = 100;
  for (int b = 0; b < batches; ++b) {
    auto batch = compose_batch(ds, 64, policy, mix_seed(spec.seed, 77, b));
    const auto rows = attraction_repulsion_balance(batch);
    std::int64_t best_pairs = -1;
    int best_cls = -1;
    for (const auto& [cls, row] : rows)
      if (row.positive_pairs > best_pairs) {
        best_pairs = row.positive_pairs;
        best_cls = cls;
      }
    if (best_cls == 0) ++head_wins;
  }
  CHECK(head_wins >= 90);
}
