#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ltc/batch.hpp"
#include "ltc/prototypes.hpp"

namespace ltc {

struct LongTailedDatasetSpec {
  int classes = 10;
  long long head_count = 500;       // samples in the most frequent class
  double imbalance_factor = 100.0;  // head count / tail count
  int input_dim = 16;
  double center_separation = 3.0;   // minimum pairwise distance of class means
  double within_stddev = 1.0;       // isotropic within-class noise
  int test_per_class = 50;          // balanced held-out split
  std::uint64_t seed = 1;
};

struct LongTailedDataset {
  LongTailedDatasetSpec spec;
  std::vector<long long> class_counts;  // per class, non-increasing
  std::vector<Vec> class_means;
  std::vector<Vec> train_x;
  std::vector<int> train_y;
  std::vector<Vec> test_x;
  std::vector<int> test_y;

  std::map<int, std::size_t> counts_map() const;
  std::vector<double> priors() const;  // class_counts normalized
};

/// Exponential count profile: N_j = round(N_max * IF^{-(j-1)/(C-1)}).
std::vector<long long> generate_longtailed_counts(int classes, long long head_count,
                                                  double imbalance_factor);

/// Deterministic synthetic dataset: seeded class means with pairwise
/// distance >= center_separation, isotropic Gaussian samples, and a
/// balanced test split. Throws when the separation cannot be met.
LongTailedDataset sample_dataset(const LongTailedDatasetSpec& spec);

/// Group thresholds plus per-group view counts plus per-view noise scales.
struct ViewPolicy {
  long long many_min = 100;  // strictly more -> many-shot
  long long few_max = 20;    // strictly fewer -> few-shot
  int views_many = 2;
  int views_medium = 3;
  int views_few = 4;
  std::vector<double> noise_scales = {0.05, 0.1, 0.15, 0.2};

  void validate() const;
  int max_views() const;
  /// Same policy with every group pinned to k views.
  ViewPolicy uniform(int k) const;
};

/// View count for one class: many/medium/few by strict threshold
/// comparison; boundary counts land in the medium group.
int assign_views(long long class_count, const ViewPolicy& policy);
std::vector<int> assign_views(std::span<const long long> class_counts,
                              const ViewPolicy& policy);

/// k noisy copies of a sample; view v adds Gaussian noise with stddev
/// noise_scales[v]. Deterministic in the seed.
std::vector<Vec> augment_views(std::span<const double> sample, int k,
                               const ViewPolicy& policy, std::uint64_t seed);

/// Raw material of one training batch before the encoder runs.
struct ComposedBatch {
  std::vector<Vec> inputs;  // augmented, not normalized
  std::vector<int> labels;
  std::vector<int> views;
  std::vector<std::size_t> base_index;  // provenance into train_x
};

/// Uniform (instance-balanced) base sampling with replacement, expanded by
/// each class's view count.
ComposedBatch compose_inputs(const LongTailedDataset& ds, std::size_t base_samples,
                             const ViewPolicy& policy, std::uint64_t seed);

/// compose_inputs + unit normalization + index sets, with class centers
/// attached when provided (all initialized centers join the batch).
ContrastiveBatch compose_batch(const LongTailedDataset& ds, std::size_t base_samples,
                               const ViewPolicy& policy, std::uint64_t seed,
                               const ClassCenters* centers = nullptr);

/// CSV round trip: <base>_train.csv / <base>_test.csv with rows
/// "label,f0,...,fD-1" plus <base>_spec.txt recording the generator spec.
void save_dataset_csv(const LongTailedDataset& ds, const std::string& basepath);
LongTailedDataset load_dataset_csv(const std::string& basepath);

}  // namespace ltc
