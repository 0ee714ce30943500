#include "ltc/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "ltc/rng.hpp"

namespace ltc {

namespace {

constexpr std::uint64_t kCenterStream = 0x6c74632d63656e74ULL;
constexpr std::uint64_t kTrainStream = 0x6c74632d74726169ULL;
constexpr std::uint64_t kTestStream = 0x6c74632d74657374ULL;

Vec gaussian_vec(Rng& rng, int dim) {
  Vec v(static_cast<std::size_t>(dim));
  for (double& x : v) x = rng.gaussian();
  return v;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::map<int, std::size_t> LongTailedDataset::counts_map() const {
  std::map<int, std::size_t> m;
  for (std::size_t j = 0; j < class_counts.size(); ++j)
    m[static_cast<int>(j)] = static_cast<std::size_t>(class_counts[j]);
  return m;
}

std::vector<double> LongTailedDataset::priors() const {
  double total = 0.0;
  for (long long c : class_counts) total += static_cast<double>(c);
  std::vector<double> p(class_counts.size());
  for (std::size_t j = 0; j < class_counts.size(); ++j)
    p[j] = static_cast<double>(class_counts[j]) / total;
  return p;
}

std::vector<long long> generate_longtailed_counts(int classes, long long head_count,
                                                  double imbalance_factor) {
  if (classes < 2) throw std::invalid_argument("need at least two classes");
  if (imbalance_factor < 1.0)
    throw std::invalid_argument("imbalance factor must be at least 1");
  if (static_cast<double>(head_count) < imbalance_factor)
    throw std::invalid_argument("head count below imbalance factor: tail class would be empty");
  std::vector<long long> counts(static_cast<std::size_t>(classes));
  for (int j = 0; j < classes; ++j) {
    const double expo = -static_cast<double>(j) / static_cast<double>(classes - 1);
    counts[static_cast<std::size_t>(j)] = std::llround(
        static_cast<double>(head_count) * std::pow(imbalance_factor, expo));
  }
  return counts;
}

LongTailedDataset sample_dataset(const LongTailedDatasetSpec& spec) {
  if (spec.input_dim < 1) throw std::invalid_argument("input_dim must be positive");
  if (spec.within_stddev < 0.0) throw std::invalid_argument("negative stddev");
  if (spec.center_separation <= 0.0)
    throw std::invalid_argument("center separation must be positive");
  if (spec.test_per_class < 1)
    throw std::invalid_argument("test_per_class must be at least 1");

  LongTailedDataset ds;
  ds.spec = spec;
  ds.class_counts =
      generate_longtailed_counts(spec.classes, spec.head_count, spec.imbalance_factor);

  // Class means: random directions on the sphere of radius
  // center_separation, rejected until all pairwise distances clear the
  // separation. Deterministic in the seed.
  Rng center_rng(mix_seed(spec.seed, kCenterStream));
  const double radius = spec.center_separation;
  const int max_attempts = 1000 * spec.classes;
  int attempts = 0;
  while (static_cast<int>(ds.class_means.size()) < spec.classes) {
    if (++attempts > max_attempts)
      throw std::runtime_error(
          "cannot place class means at the requested separation in this dimension");
    Vec dir = normalize(gaussian_vec(center_rng, spec.input_dim));
    for (double& x : dir) x *= radius;
    bool ok = true;
    for (const Vec& m : ds.class_means) {
      double d2 = 0.0;
      for (std::size_t d = 0; d < m.size(); ++d)
        d2 += (m[d] - dir[d]) * (m[d] - dir[d]);
      if (std::sqrt(d2) < spec.center_separation) {
        ok = false;
        break;
      }
    }
    if (ok) ds.class_means.push_back(std::move(dir));
  }

  for (int j = 0; j < spec.classes; ++j) {
    const auto& mean = ds.class_means[static_cast<std::size_t>(j)];
    Rng train_rng(mix_seed(spec.seed, kTrainStream, static_cast<std::uint64_t>(j)));
    for (long long s = 0; s < ds.class_counts[static_cast<std::size_t>(j)]; ++s) {
      Vec x = gaussian_vec(train_rng, spec.input_dim);
      for (std::size_t d = 0; d < x.size(); ++d)
        x[d] = mean[d] + spec.within_stddev * x[d];
      ds.train_x.push_back(std::move(x));
      ds.train_y.push_back(j);
    }
    Rng test_rng(mix_seed(spec.seed, kTestStream, static_cast<std::uint64_t>(j)));
    for (int s = 0; s < spec.test_per_class; ++s) {
      Vec x = gaussian_vec(test_rng, spec.input_dim);
      for (std::size_t d = 0; d < x.size(); ++d)
        x[d] = mean[d] + spec.within_stddev * x[d];
      ds.test_x.push_back(std::move(x));
      ds.test_y.push_back(j);
    }
  }
  return ds;
}

void ViewPolicy::validate() const {
  if (many_min <= few_max)
    throw std::invalid_argument("view thresholds must satisfy many_min > few_max");
  if (views_many < 1 || views_medium < 1 || views_few < 1)
    throw std::invalid_argument("view counts must be positive");
  if (views_many > views_medium || views_medium > views_few)
    throw std::invalid_argument("view counts must be non-decreasing toward few-shot");
  if (noise_scales.empty()) throw std::invalid_argument("no noise scales configured");
  for (std::size_t v = 0; v < noise_scales.size(); ++v) {
    if (noise_scales[v] < 0.0) throw std::invalid_argument("negative noise scale");
    if (v > 0 && noise_scales[v] < noise_scales[v - 1])
      throw std::invalid_argument("noise scales must be non-decreasing");
  }
  if (static_cast<std::size_t>(max_views()) > noise_scales.size())
    throw std::invalid_argument("more views than configured noise scales");
}

int ViewPolicy::max_views() const {
  return std::max(views_many, std::max(views_medium, views_few));
}

ViewPolicy ViewPolicy::uniform(int k) const {
  ViewPolicy p = *this;
  p.views_many = p.views_medium = p.views_few = k;
  return p;
}

int assign_views(long long class_count, const ViewPolicy& policy) {
  if (class_count > policy.many_min) return policy.views_many;
  if (class_count < policy.few_max) return policy.views_few;
  return policy.views_medium;
}

std::vector<int> assign_views(std::span<const long long> class_counts,
                              const ViewPolicy& policy) {
  std::vector<int> out(class_counts.size());
  for (std::size_t j = 0; j < class_counts.size(); ++j)
    out[j] = assign_views(class_counts[j], policy);
  return out;
}

std::vector<Vec> augment_views(std::span<const double> sample, int k,
                               const ViewPolicy& policy, std::uint64_t seed) {
  if (k < 1) throw std::invalid_argument("need at least one view");
  if (static_cast<std::size_t>(k) > policy.noise_scales.size())
    throw std::invalid_argument("more views requested than configured noise scales");
  Rng rng(seed);
  std::vector<Vec> views(static_cast<std::size_t>(k));
  for (int v = 0; v < k; ++v) {
    const double scale = policy.noise_scales[static_cast<std::size_t>(v)];
    Vec x(sample.begin(), sample.end());
    for (double& d : x) d += scale * rng.gaussian();
    views[static_cast<std::size_t>(v)] = std::move(x);
  }
  return views;
}

ComposedBatch compose_inputs(const LongTailedDataset& ds, std::size_t base_samples,
                             const ViewPolicy& policy, std::uint64_t seed) {
  if (base_samples < 2)
    throw std::invalid_argument("a batch needs at least two base samples");
  if (ds.train_x.empty()) throw std::invalid_argument("empty dataset");
  policy.validate();

  const auto views_per_class =
      assign_views(std::span<const long long>(ds.class_counts), policy);

  Rng rng(seed);
  ComposedBatch out;
  for (std::size_t b = 0; b < base_samples; ++b) {
    const auto idx = static_cast<std::size_t>(rng.bounded(ds.train_x.size()));
    const int label = ds.train_y[idx];
    const int k = views_per_class[static_cast<std::size_t>(label)];
    const auto& base = ds.train_x[idx];
    for (int v = 0; v < k; ++v) {
      const double scale = policy.noise_scales[static_cast<std::size_t>(v)];
      Vec x(base.begin(), base.end());
      for (double& d : x) d += scale * rng.gaussian();
      out.inputs.push_back(std::move(x));
      out.labels.push_back(label);
      out.views.push_back(v);
      out.base_index.push_back(idx);
    }
  }
  return out;
}

ContrastiveBatch compose_batch(const LongTailedDataset& ds, std::size_t base_samples,
                               const ViewPolicy& policy, std::uint64_t seed,
                               const ClassCenters* centers) {
  const auto composed = compose_inputs(ds, base_samples, policy, seed);
  std::vector<Embedding> samples;
  samples.reserve(composed.inputs.size());
  for (std::size_t e = 0; e < composed.inputs.size(); ++e)
    samples.push_back(
        make_embedding(composed.inputs[e], composed.labels[e], composed.views[e]));
  auto batch = build_batch(std::move(samples), ds.counts_map());
  if (centers != nullptr) {
    const auto classes = centers->initialized_classes();
    if (!classes.empty())
      attach_centers(batch, centers->centers_for_batch(classes));
  }
  return batch;
}

void save_dataset_csv(const LongTailedDataset& ds, const std::string& basepath) {
  auto write_split = [&](const std::string& path, const std::vector<Vec>& xs,
                         const std::vector<int>& ys) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      out << ys[i];
      for (double v : xs[i]) out << ',' << format_double(v);
      out << '\n';
    }
  };
  write_split(basepath + "_train.csv", ds.train_x, ds.train_y);
  write_split(basepath + "_test.csv", ds.test_x, ds.test_y);

  std::ofstream spec(basepath + "_spec.txt");
  if (!spec) throw std::runtime_error("cannot write " + basepath + "_spec.txt");
  spec << "classes=" << ds.spec.classes << '\n'
       << "head_count=" << ds.spec.head_count << '\n'
       << "imbalance_factor=" << format_double(ds.spec.imbalance_factor) << '\n'
       << "input_dim=" << ds.spec.input_dim << '\n'
       << "center_separation=" << format_double(ds.spec.center_separation) << '\n'
       << "within_stddev=" << format_double(ds.spec.within_stddev) << '\n'
       << "test_per_class=" << ds.spec.test_per_class << '\n'
       << "seed=" << ds.spec.seed << '\n';
  for (std::size_t j = 0; j < ds.class_means.size(); ++j) {
    spec << "mean_" << j << '=';
    for (std::size_t d = 0; d < ds.class_means[j].size(); ++d) {
      if (d) spec << ',';
      spec << format_double(ds.class_means[j][d]);
    }
    spec << '\n';
  }
}

LongTailedDataset load_dataset_csv(const std::string& basepath) {
  LongTailedDataset ds;
  std::ifstream spec(basepath + "_spec.txt");
  if (!spec) throw std::runtime_error("cannot read " + basepath + "_spec.txt");
  std::string line;
  std::map<std::string, std::string> kv;
  std::vector<std::pair<std::size_t, Vec>> means;
  while (std::getline(spec, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key.rfind("mean_", 0) == 0) {
      Vec m;
      std::stringstream ss(value);
      std::string tok;
      while (std::getline(ss, tok, ',')) m.push_back(std::stod(tok));
      means.emplace_back(std::stoul(key.substr(5)), std::move(m));
    } else {
      kv[key] = value;
    }
  }
  ds.spec.classes = std::stoi(kv.at("classes"));
  ds.spec.head_count = std::stoll(kv.at("head_count"));
  ds.spec.imbalance_factor = std::stod(kv.at("imbalance_factor"));
  ds.spec.input_dim = std::stoi(kv.at("input_dim"));
  ds.spec.center_separation = std::stod(kv.at("center_separation"));
  ds.spec.within_stddev = std::stod(kv.at("within_stddev"));
  ds.spec.test_per_class = std::stoi(kv.at("test_per_class"));
  ds.spec.seed = std::stoull(kv.at("seed"));
  ds.class_means.resize(means.size());
  for (auto& [j, m] : means) ds.class_means.at(j) = std::move(m);

  auto read_split = [&](const std::string& path, std::vector<Vec>& xs,
                        std::vector<int>& ys) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::string row;
    while (std::getline(in, row)) {
      if (row.empty()) continue;
      std::stringstream ss(row);
      std::string tok;
      std::getline(ss, tok, ',');
      ys.push_back(std::stoi(tok));
      Vec x;
      while (std::getline(ss, tok, ',')) x.push_back(std::stod(tok));
      xs.push_back(std::move(x));
    }
  };
  read_split(basepath + "_train.csv", ds.train_x, ds.train_y);
  read_split(basepath + "_test.csv", ds.test_x, ds.test_y);

  ds.class_counts.assign(static_cast<std::size_t>(ds.spec.classes), 0);
  for (int y : ds.train_y) ++ds.class_counts[static_cast<std::size_t>(y)];
  return ds;
}

}  // namespace ltc
