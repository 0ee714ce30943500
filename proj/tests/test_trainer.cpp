#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>

#include "ltc/config.hpp"
#include "ltc/io.hpp"
#include "ltc/trainer.hpp"
#include "test_support.hpp"

using namespace ltc;

namespace {

LongTailedDatasetSpec tiny_spec() {
  LongTailedDatasetSpec spec;
  spec.classes = 3;
  spec.head_count = 60;
  spec.imbalance_factor = 6.0;  // counts 60, 24(ish), 10
  spec.input_dim = 6;
  spec.center_separation = 3.0;
  spec.within_stddev = 0.6;
  spec.test_per_class = 10;
  spec.seed = 11;
  return spec;
}

TrainConfig tiny_train_config() {
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_base = 8;
  cfg.learning_rate = 0.05;
  cfg.alpha = 0.5;
  cfg.seed = 3;
  cfg.encoder.input_dim = 6;
  cfg.encoder.hidden = {16};
  cfg.encoder.embedding_dim = 8;
  cfg.view_policy.many_min = 30;
  cfg.view_policy.few_max = 15;
  return cfg;
}

bool traces_equal(const MetricTrace& a, const MetricTrace& b) {
  if (a.rows.size() != b.rows.size()) return false;
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    const auto& x = a.rows[i];
    const auto& y = b.rows[i];
    if (x.loss_total != y.loss_total || x.loss_bs != y.loss_bs ||
        x.loss_contrastive != y.loss_contrastive)
      return false;
    if (x.test_class_acc != y.test_class_acc) return false;
    if (x.train_class_acc != y.train_class_acc) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("forward produces unit embeddings and bounded cosine logits") {
  Rng rng(1);
  EncoderConfig ecfg;
  ecfg.input_dim = 4;
  ecfg.hidden = {8};
  ecfg.embedding_dim = 4;
  auto model = make_model(ecfg, 3, 0.05, 0.9, rng);

  std::vector<Vec> inputs;
  Rng data_rng(2);
  for (int i = 0; i < 10; ++i) {
    Vec x(4);
    for (double& v : x) v = data_rng.gaussian();
    inputs.push_back(std::move(x));
  }
  const auto [embed, logits] = forward(model, inputs);
  for (std::size_t e = 0; e < embed.rows; ++e) {
    double norm_sq = 0.0;
    for (std::size_t d = 0; d < embed.cols; ++d)
      norm_sq += embed.at(e, d) * embed.at(e, d);
    CHECK(std::abs(std::sqrt(norm_sq) - 1.0) < 1e-12);
    for (std::size_t c = 0; c < logits.cols; ++c)
      CHECK(std::abs(logits.at(e, c)) <= model.head.scale + 1e-9);
  }

  // Zero-weight head: all logits zero.
  model.head.weight.fill(0.0);
  const auto [embed2, logits2] = forward(model, inputs);
  for (double v : logits2.data) CHECK(v == 0.0);
}

TEST_CASE("dimension mismatch is rejected") {
  Rng rng(1);
  EncoderConfig ecfg;
  ecfg.input_dim = 4;
  ecfg.embedding_dim = 4;
  auto model = make_model(ecfg, 2, 0.05, 0.9, rng);
  std::vector<Vec> bad{Vec{1.0, 2.0}};
  CHECK_THROWS_AS(forward(model, bad), std::invalid_argument);
}

TEST_CASE("end-to-end gradients match finite differences for every loss kind") {
  const auto ds = sample_dataset(tiny_spec());
  for (auto kind :
       {TrainLossKind::bs_only, TrainLossKind::bs_scl_uniform,
        TrainLossKind::bs_scl_aware, TrainLossKind::bs_acl_noweight,
        TrainLossKind::bs_acl}) {
    TrainConfig cfg = tiny_train_config();
    cfg.loss_kind = kind;

    Rng rng(17);
    auto model = make_model(cfg.encoder, ds.spec.classes, cfg.classifier_tau,
                            cfg.center_momentum, rng);
    // ACL variants need initialized centers before a pure gradient pass.
    for (int c = 0; c < ds.spec.classes; ++c) {
      Vec v(static_cast<std::size_t>(cfg.encoder.embedding_dim));
      for (double& x : v) x = rng.gaussian();
      model.centers.init_center(c, v);
    }

    const auto batch = compose_inputs(ds, 8, cfg.active_policy(), 777);
    const auto grads = compute_gradients(model, batch, ds, cfg);

    // Probe a handful of parameters in every tensor.
    Rng pick(23);
    auto probe = [&](double* param, const double analytic) {
      const double h = 1e-5;
      const double saved = *param;
      *param = saved + h;
      const double up = evaluate_batch_loss(model, batch, ds, cfg).total;
      *param = saved - h;
      const double down = evaluate_batch_loss(model, batch, ds, cfg).total;
      *param = saved;
      const double fd = (up - down) / (2.0 * h);
      const double err =
          std::abs(analytic - fd) / std::max({1.0, std::abs(analytic), std::abs(fd)});
      CHECK(err < 1e-4);
    };

    for (std::size_t l = 0; l < model.encoder.weights.size(); ++l)
      for (int k = 0; k < 4; ++k) {
        const auto idx = pick.bounded(model.encoder.weights[l].data.size());
        probe(&model.encoder.weights[l].data[idx], grads.d_weights[l].data[idx]);
      }
    for (std::size_t l = 0; l < model.encoder.biases.size(); ++l) {
      const auto idx = pick.bounded(model.encoder.biases[l].size());
      probe(&model.encoder.biases[l][idx], grads.d_biases[l][idx]);
    }
    for (int k = 0; k < 4; ++k) {
      const auto idx = pick.bounded(model.head.weight.data.size());
      probe(&model.head.weight.data[idx], grads.d_head.data[idx]);
    }
  }
}

TEST_CASE("learning rate zero leaves parameters bitwise unchanged") {
  const auto ds = sample_dataset(tiny_spec());
  TrainConfig cfg = tiny_train_config();
  cfg.loss_kind = TrainLossKind::bs_acl;

  Rng rng(5);
  auto model = make_model(cfg.encoder, ds.spec.classes, cfg.classifier_tau,
                          cfg.center_momentum, rng);
  const auto weights_before = model.encoder.weights;
  const auto head_before = model.head.weight;
  auto sgd = make_sgd_state(model);
  const auto batch = compose_inputs(ds, 8, cfg.active_policy(), 99);
  backward_and_step(model, sgd, batch, ds, cfg, /*lr=*/0.0, nullptr, 99);
  for (std::size_t l = 0; l < weights_before.size(); ++l)
    CHECK(model.encoder.weights[l].data == weights_before[l].data);
  CHECK(model.head.weight.data == head_before.data);
}

TEST_CASE("centers change only through the EMA path") {
  const auto ds = sample_dataset(tiny_spec());
  TrainConfig cfg = tiny_train_config();
  cfg.loss_kind = TrainLossKind::bs_acl;

  Rng rng(5);
  auto model = make_model(cfg.encoder, ds.spec.classes, cfg.classifier_tau,
                          cfg.center_momentum, rng);
  auto sgd = make_sgd_state(model);
  const auto batch = compose_inputs(ds, 8, cfg.active_policy(), 99);

  // Predict the post-step center: init from the pre-step batch mean, then
  // one EMA update with the same mean. Any gradient leak would deviate.
  const auto fw = encoder_forward(model.encoder, batch.inputs);
  std::map<int, std::pair<Vec, std::size_t>> sums;
  for (std::size_t e = 0; e < batch.inputs.size(); ++e) {
    auto& [sum, n] = sums[batch.labels[e]];
    if (sum.empty()) sum.assign(fw.embed.cols, 0.0);
    for (std::size_t d = 0; d < fw.embed.cols; ++d) sum[d] += fw.embed.at(e, d);
    ++n;
  }
  backward_and_step(model, sgd, batch, ds, cfg, 0.1, nullptr, 99);
  for (auto& [cls, acc] : sums) {
    Vec mean = acc.first;
    for (double& x : mean) x /= static_cast<double>(acc.second);
    ClassCenters expected(1, static_cast<int>(mean.size()), cfg.center_momentum);
    expected.init_center(0, mean);
    expected.ema_update(0, mean);
    const auto& got = model.centers.center(cls);
    for (std::size_t d = 0; d < mean.size(); ++d)
      CHECK(got[d] == doctest::Approx(expected.center(0)[d]).epsilon(1e-14));
  }
}

TEST_CASE("alpha zero reproduces the bs_only trajectory bitwise") {
  const auto ds = sample_dataset(tiny_spec());
  TrainConfig acl_cfg = tiny_train_config();
  acl_cfg.loss_kind = TrainLossKind::bs_acl;
  acl_cfg.alpha = 0.0;
  acl_cfg.view_mode = ViewMode::aware;

  TrainConfig bs_cfg = tiny_train_config();
  bs_cfg.loss_kind = TrainLossKind::bs_only;
  bs_cfg.alpha = 0.0;
  bs_cfg.view_mode = ViewMode::aware;

  const auto a = train(acl_cfg, ds);
  const auto b = train(bs_cfg, ds);
  CHECK(traces_equal(a.trace, b.trace));
  for (std::size_t l = 0; l < a.model.encoder.weights.size(); ++l)
    CHECK(a.model.encoder.weights[l].data == b.model.encoder.weights[l].data);
  CHECK(a.model.head.weight.data == b.model.head.weight.data);
}

TEST_CASE("training is deterministic given config and seed") {
  const auto ds = sample_dataset(tiny_spec());
  TrainConfig cfg = tiny_train_config();
  cfg.loss_kind = TrainLossKind::bs_acl;
  const auto a = train(cfg, ds);
  const auto b = train(cfg, ds);
  CHECK(traces_equal(a.trace, b.trace));
  CHECK(a.model.head.weight.data == b.model.head.weight.data);
}

TEST_CASE("zero epochs yields the initial model and an empty trace") {
  const auto ds = sample_dataset(tiny_spec());
  TrainConfig cfg = tiny_train_config();
  cfg.epochs = 0;
  const auto r = train(cfg, ds);
  CHECK(r.trace.rows.empty());
}

TEST_CASE("bs_only learns a separable balanced toy set") {
  LongTailedDatasetSpec spec;
  spec.classes = 3;
  spec.head_count = 60;
  spec.imbalance_factor = 1.0;
  spec.input_dim = 6;
  spec.center_separation = 4.0;
  spec.within_stddev = 0.4;
  spec.test_per_class = 20;
  spec.seed = 21;
  const auto ds = sample_dataset(spec);

  TrainConfig cfg = tiny_train_config();
  cfg.loss_kind = TrainLossKind::bs_only;
  cfg.epochs = 50;
  cfg.learning_rate = 0.05;
  const auto r = train(cfg, ds);
  CHECK(r.trace.rows.back().test_groups.all >= 0.95);

  // Loss non-increasing after the first epoch, within SGD noise.
  for (std::size_t e = 2; e < r.trace.rows.size(); ++e)
    CHECK(r.trace.rows[e].loss_total <=
          r.trace.rows[e - 1].loss_total + 1e-3);
}

TEST_CASE("evaluate groups classes by train count") {
  // Hand-built model: identity encoder (2 -> 2), head rows equal to the
  // class directions; class 0 along +x, class 1 along +y.
  Model model;
  model.classes = 2;
  model.encoder.cfg.input_dim = 2;
  model.encoder.cfg.embedding_dim = 2;
  Matrix w(2, 2);
  w.at(0, 0) = 1.0;
  w.at(1, 1) = 1.0;
  model.encoder.weights.push_back(w);
  model.encoder.biases.push_back(Vec(2, 0.0));
  model.head.weight = Matrix(2, 2);
  model.head.weight.at(0, 0) = 1.0;
  model.head.weight.at(1, 1) = 1.0;
  model.head.scale = 20.0;
  model.centers = ClassCenters(2, 2, 0.9);

  std::vector<Vec> xs{{1.0, 0.1}, {1.0, -0.1}, {0.1, 1.0}, {-0.05, 1.0}};
  std::vector<int> ys{0, 0, 1, 1};
  const std::vector<long long> counts{150, 10};
  const auto ev = evaluate(model, xs, ys, counts, 100, 20);
  CHECK(ev.groups.all == 1.0);
  REQUIRE(ev.groups.many.has_value());
  REQUIRE(ev.groups.few.has_value());
  CHECK_FALSE(ev.groups.medium.has_value());
  CHECK(*ev.groups.many == 1.0);
  CHECK(*ev.groups.few == 1.0);

  // Constant predictor: both head rows identical -> argmax is class 0.
  model.head.weight.at(1, 1) = 0.0;
  model.head.weight.at(1, 0) = 1.0;
  const auto cv = evaluate(model, xs, ys, counts, 100, 20);
  CHECK(cv.groups.all == doctest::Approx(0.5).epsilon(1e-12));

  // Balanced counts: only the many group exists.
  const std::vector<long long> balanced{150, 150};
  const auto bv = evaluate(model, xs, ys, balanced, 100, 20);
  CHECK(bv.groups.many.has_value());
  CHECK_FALSE(bv.groups.medium.has_value());
  CHECK_FALSE(bv.groups.few.has_value());
}

TEST_CASE("group accuracies are recomputable from the metrics CSV") {
  const auto ds = sample_dataset(tiny_spec());
  TrainConfig cfg = tiny_train_config();
  cfg.loss_kind = TrainLossKind::bs_acl;
  cfg.epochs = 2;
  const auto r = train(cfg, ds);

  const auto path =
      (std::filesystem::temp_directory_path() / "ltc_metrics_test.csv").string();
  write_metrics_csv(path, r.trace, 0xabcd, cfg.seed);

  std::ifstream in(path);
  std::string line;
  std::getline(in, line);  // header comment
  std::getline(in, line);  // column names
  std::size_t row_index = 0;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) cells.push_back(tok);
    const std::size_t C = static_cast<std::size_t>(ds.spec.classes);
    REQUIRE(cells.size() == 8 + 2 * C);

    // Recompute groups from the per-class test accuracies.
    double all = 0.0, many = 0.0, medium = 0.0, few = 0.0;
    std::size_t n_many = 0, n_medium = 0, n_few = 0;
    for (std::size_t c = 0; c < C; ++c) {
      const double acc = std::stod(cells[8 + C + c]);
      all += acc;
      const long long count = ds.class_counts[c];
      if (count > cfg.view_policy.many_min) {
        many += acc;
        ++n_many;
      } else if (count < cfg.view_policy.few_max) {
        few += acc;
        ++n_few;
      } else {
        medium += acc;
        ++n_medium;
      }
    }
    CHECK(std::stod(cells[4]) ==
          doctest::Approx(all / static_cast<double>(C)).epsilon(1e-12));
    if (n_many)
      CHECK(std::stod(cells[5]) ==
            doctest::Approx(many / static_cast<double>(n_many)).epsilon(1e-12));
    if (n_medium)
      CHECK(std::stod(cells[6]) ==
            doctest::Approx(medium / static_cast<double>(n_medium)).epsilon(1e-12));
    if (n_few)
      CHECK(std::stod(cells[7]) ==
            doctest::Approx(few / static_cast<double>(n_few)).epsilon(1e-12));
    ++row_index;
  }
  CHECK(row_index == r.trace.rows.size());
  std::remove(path.c_str());
}

TEST_CASE("checkpoint round trip") {
  const auto ds = sample_dataset(tiny_spec());
  TrainConfig cfg = tiny_train_config();
  cfg.loss_kind = TrainLossKind::bs_acl;
  cfg.epochs = 1;
  const auto r = train(cfg, ds);

  const auto path =
      (std::filesystem::temp_directory_path() / "ltc_ckpt_test.bin").string();
  save_checkpoint(r.model, path, 0x1234abcd, cfg.seed);
  const auto loaded = load_checkpoint(path);
  CHECK(loaded.config_hash == 0x1234abcd);
  CHECK(loaded.seed == cfg.seed);
  CHECK(loaded.model.classes == r.model.classes);
  for (std::size_t l = 0; l < r.model.encoder.weights.size(); ++l)
    CHECK(loaded.model.encoder.weights[l].data == r.model.encoder.weights[l].data);
  CHECK(loaded.model.head.weight.data == r.model.head.weight.data);
  CHECK(loaded.model.head.scale == r.model.head.scale);
  for (int c = 0; c < r.model.classes; ++c) {
    CHECK(loaded.model.centers.initialized(c) == r.model.centers.initialized(c));
    if (r.model.centers.initialized(c))
      CHECK(loaded.model.centers.center(c) == r.model.centers.center(c));
  }
  std::remove(path.c_str());
}

TEST_CASE("diagnose_conflicts produces per-class tallies") {
  const auto ds = sample_dataset(tiny_spec());
  TrainConfig cfg = tiny_train_config();
  Rng rng(9);
  const auto model = make_model(cfg.encoder, ds.spec.classes, cfg.classifier_tau,
                                cfg.center_momentum, rng);
  const auto report = diagnose_conflicts(model, ds, cfg, 5);
  CHECK_FALSE(report.per_class.empty());
  for (const auto& [cls, st] : report.per_class) {
    CHECK(st.conflict_ratio >= 0.0);
    CHECK(st.conflict_ratio <= 1.0);
    CHECK(st.beta >= 0.0);
    CHECK(st.beta <= 1.0);
  }
  CHECK_THROWS_AS(diagnose_conflicts(model, ds, cfg, 0), std::invalid_argument);
}
