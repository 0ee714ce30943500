#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>
#include <stdexcept>

#include "ltc/data.hpp"
#include "ltc/diagnostics.hpp"
#include "test_support.hpp"

using namespace ltc;

TEST_CASE("generate_longtailed_counts") {
  CHECK(generate_longtailed_counts(3, 1000, 100.0) ==
        std::vector<long long>{1000, 100, 10});
  CHECK(generate_longtailed_counts(5, 64, 1.0) ==
        std::vector<long long>{64, 64, 64, 64, 64});
  CHECK(generate_longtailed_counts(2, 100, 100.0) == std::vector<long long>{100, 1});
  CHECK_THROWS_AS(generate_longtailed_counts(3, 50, 100.0), std::invalid_argument);
  CHECK_THROWS_AS(generate_longtailed_counts(1, 100, 10.0), std::invalid_argument);
}

TEST_CASE("count profile is non-increasing with max/min ratio near IF") {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const int C = 2 + static_cast<int>(rng.bounded(30));
    const double IF = 1.0 + static_cast<double>(rng.bounded(200));
    const long long n_max = static_cast<long long>(IF) + rng.bounded(5000);
    const auto counts = generate_longtailed_counts(C, n_max, IF);
    CHECK(counts.front() == n_max);
    for (std::size_t j = 1; j < counts.size(); ++j)
      CHECK(counts[j] <= counts[j - 1]);
    const double ratio =
        static_cast<double>(counts.front()) / static_cast<double>(counts.back());
    const double tol = 1.0 / static_cast<double>(counts.back());
    CHECK(std::abs(ratio - IF) / IF <= tol + 1e-12);
  }
}

TEST_CASE("sample_dataset determinism and shape") {
  LongTailedDatasetSpec spec;
  spec.classes = 3;
  spec.head_count = 1000;
  spec.imbalance_factor = 100.0;
  spec.input_dim = 6;
  spec.test_per_class = 7;
  spec.seed = 99;
  const auto a = sample_dataset(spec);
  const auto b = sample_dataset(spec);

  CHECK(a.train_x.size() == 1110);  // 1000 + 100 + 10
  CHECK(a.test_x.size() == 3 * 7);
  CHECK(a.train_x == b.train_x);
  CHECK(a.test_x == b.test_x);
  CHECK(a.train_y == b.train_y);
  CHECK(a.class_means == b.class_means);

  for (std::size_t i = 0; i < a.class_means.size(); ++i)
    for (std::size_t j = i + 1; j < a.class_means.size(); ++j) {
      double d2 = 0.0;
      for (std::size_t d = 0; d < a.class_means[i].size(); ++d) {
        const double diff = a.class_means[i][d] - a.class_means[j][d];
        d2 += diff * diff;
      }
      CHECK(std::sqrt(d2) >= spec.center_separation - 1e-12);
    }
}

TEST_CASE("sample_dataset degenerate and infeasible cases") {
  LongTailedDatasetSpec spec;
  spec.classes = 2;
  spec.head_count = 10;
  spec.imbalance_factor = 2.0;
  spec.input_dim = 4;
  spec.within_stddev = 0.0;
  spec.test_per_class = 2;
  spec.seed = 5;
  const auto ds = sample_dataset(spec);
  for (std::size_t i = 0; i < ds.train_x.size(); ++i)
    CHECK(ds.train_x[i] == ds.class_means[static_cast<std::size_t>(ds.train_y[i])]);

  LongTailedDatasetSpec crowded = spec;
  crowded.classes = 60;
  crowded.head_count = 60;
  crowded.imbalance_factor = 1.0;
  crowded.input_dim = 2;  // 60 separated means cannot fit on a circle
  CHECK_THROWS_AS(sample_dataset(crowded), std::runtime_error);
}

TEST_CASE("assign_views by shot group") {
  ViewPolicy policy;  // thresholds (100, 20), views (2, 3, 4)
  CHECK(assign_views(150, policy) == 2);
  CHECK(assign_views(50, policy) == 3);
  CHECK(assign_views(10, policy) == 4);
  CHECK(assign_views(100, policy) == 3);  // boundary -> medium
  CHECK(assign_views(20, policy) == 3);   // boundary -> medium

  const auto uniform = policy.uniform(3);
  CHECK(assign_views(150, uniform) == 3);
  CHECK(assign_views(10, uniform) == 3);

  const std::vector<long long> counts{150, 50, 10};
  CHECK(assign_views(std::span<const long long>(counts), policy) ==
        std::vector<int>{2, 3, 4});
}

TEST_CASE("view policy validation") {
  ViewPolicy bad;
  bad.many_min = 10;
  bad.few_max = 20;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  ViewPolicy decreasing;
  decreasing.views_many = 4;
  decreasing.views_few = 2;
  CHECK_THROWS_AS(decreasing.validate(), std::invalid_argument);

  ViewPolicy shuffled;
  shuffled.noise_scales = {0.2, 0.1};
  CHECK_THROWS_AS(shuffled.validate(), std::invalid_argument);

  ViewPolicy short_scales;
  short_scales.noise_scales = {0.1};
  CHECK_THROWS_AS(short_scales.validate(), std::invalid_argument);
}

TEST_CASE("augment_views") {
  ViewPolicy policy;
  policy.noise_scales = {0.0, 0.0, 0.0, 0.0};
  const Vec sample{1.0, -2.0, 0.5};
  const auto copies = augment_views(sample, 3, policy, 42);
  REQUIRE(copies.size() == 3);
  for (const auto& v : copies) CHECK(v == sample);

  ViewPolicy noisy;
  noisy.noise_scales = {0.05, 0.1, 0.1, 0.2};
  CHECK(augment_views(sample, 4, noisy, 7) == augment_views(sample, 4, noisy, 7));
  CHECK_THROWS_AS(augment_views(sample, 5, noisy, 7), std::invalid_argument);
}

TEST_CASE("augment_views noise scale statistics") {
  ViewPolicy policy;
  policy.noise_scales = {0.05, 0.1, 0.1, 0.2};
  const Vec sample(4, 0.0);
  std::vector<double> sq_sum(4, 0.0);
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const auto views = augment_views(sample, 4, policy, 1000 + i);
    for (int v = 0; v < 4; ++v)
      for (double x : views[static_cast<std::size_t>(v)])
        sq_sum[static_cast<std::size_t>(v)] += x * x;
  }
  for (int v = 0; v < 4; ++v) {
    const double stddev = std::sqrt(sq_sum[static_cast<std::size_t>(v)] /
                                    (4.0 * static_cast<double>(draws)));
    CHECK(std::abs(stddev - policy.noise_scales[static_cast<std::size_t>(v)]) <
          0.1 * policy.noise_scales[static_cast<std::size_t>(v)]);
  }
}

namespace {

LongTailedDataset small_two_group_dataset() {
  LongTailedDatasetSpec spec;
  spec.classes = 2;
  spec.head_count = 150;
  spec.imbalance_factor = 15.0;  // counts {150, 10}: many and few groups
  spec.input_dim = 5;
  spec.test_per_class = 3;
  spec.seed = 123;
  return sample_dataset(spec);
}

}  // namespace

TEST_CASE("compose_batch expansion and index sets") {
  const auto ds = small_two_group_dataset();
  ViewPolicy policy;  // class 0 -> 2 views (many), class 1 -> 4 views (few)

  auto batch = compose_batch(ds, 8, policy, 2024);
  validate_batch(batch);

  // Per-base expansion: each base instance of class 0 appears twice,
  // class 1 four times.
  const auto composed = compose_inputs(ds, 8, policy, 2024);
  std::map<std::size_t, int> appearances;
  for (std::size_t e = 0; e < composed.base_index.size(); ++e)
    ++appearances[composed.base_index[e]];
  std::size_t expected_total = 0;
  for (const auto& [base, times] : appearances) {
    const int label = ds.train_y[base];
    CHECK(times == (label == 0 ? 2 : 4));
  }
  for (std::size_t e = 0; e < composed.base_index.size(); ++e) (void)e;
  expected_total = composed.inputs.size();
  CHECK(batch.sample_count == expected_total);

  // Uniform two views on two classes: 4 base samples -> 8 entries, and
  // every anchor of a class with both bases sampled has |P| = 3.
  const auto uniform = policy.uniform(2);
  auto ubatch = compose_batch(ds, 4, uniform, 99);
  CHECK(ubatch.sample_count == 8);
  for (std::size_t i = 0; i < ubatch.sample_count; ++i) {
    std::size_t same = 0;
    for (std::size_t j = 0; j < ubatch.sample_count; ++j)
      if (j != i && ubatch.entries[j].label == ubatch.entries[i].label) ++same;
    CHECK(ubatch.positives[i].size() == same);
    CHECK(ubatch.positives[i].size() + ubatch.negatives[i].size() ==
          ubatch.sample_count - 1);
  }

  CHECK_THROWS_AS(compose_inputs(ds, 1, policy, 7), std::invalid_argument);
}

TEST_CASE("compose_batch attaches initialized centers") {
  const auto ds = small_two_group_dataset();
  ViewPolicy policy;
  ClassCenters centers(2, ds.spec.input_dim, 0.9);
  centers.init_center(0, Vec{1.0, 0.0, 0.0, 0.0, 0.0});
  centers.init_center(1, Vec{0.0, 1.0, 0.0, 0.0, 0.0});

  auto batch = compose_batch(ds, 6, policy, 7, &centers);
  validate_batch(batch);
  CHECK(batch.has_centers());
  CHECK(batch.entries.size() == batch.sample_count + 2);
  for (std::size_t i = 0; i < batch.sample_count; ++i) {
    CHECK(batch.center_index[i] != ContrastiveBatch::npos);
    CHECK(batch.entries[batch.center_index[i]].label == batch.entries[i].label);
  }
}

TEST_CASE("distribution-aware views narrow the head/tail pair-count gap") {
  LongTailedDatasetSpec spec;
  spec.classes = 10;
  spec.head_count = 300;
  spec.imbalance_factor = 100.0;
  spec.input_dim = 8;
  spec.test_per_class = 2;
  spec.seed = 404;
  const auto ds = sample_dataset(spec);

  ViewPolicy aware;
  const auto uniform = aware.uniform(4);

  auto pair_ratio = [&](const ViewPolicy& policy) {
    double head = 0.0, tail = 0.0;
    for (int b = 0; b < 100; ++b) {
      auto batch = compose_batch(ds, 32, policy, mix_seed(spec.seed, 5, b));
      const auto rows = attraction_repulsion_balance(batch);
      for (const auto& [cls, row] : rows) {
        if (cls == 0) head += static_cast<double>(row.positive_pairs);
        if (cls == spec.classes - 1) tail += static_cast<double>(row.positive_pairs);
      }
    }
    return head / std::max(1.0, tail);
  };

  CHECK(pair_ratio(aware) < pair_ratio(uniform));
}

TEST_CASE("dataset CSV round trip") {
  const auto ds = small_two_group_dataset();
  const auto base = std::filesystem::temp_directory_path() / "ltc_ds_roundtrip";
  save_dataset_csv(ds, base.string());
  const auto loaded = load_dataset_csv(base.string());
  CHECK(loaded.train_x == ds.train_x);
  CHECK(loaded.train_y == ds.train_y);
  CHECK(loaded.test_x == ds.test_x);
  CHECK(loaded.test_y == ds.test_y);
  CHECK(loaded.class_counts == ds.class_counts);
  CHECK(loaded.class_means == ds.class_means);
  CHECK(loaded.spec.seed == ds.spec.seed);
  for (const char* suffix : {"_train.csv", "_test.csv", "_spec.txt"})
    std::remove((base.string() + suffix).c_str());
}
