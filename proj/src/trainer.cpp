#include "ltc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "ltc/losses.hpp"

namespace ltc {

namespace {

constexpr std::uint64_t kInitStream = 0x6c74632d696e6974ULL;
constexpr std::uint64_t kBatchStream = 0x6c74632d62617463ULL;
constexpr std::uint64_t kCheckpointMagic = 0x4c54434b50543031ULL;  // "LTCKPT01"

}  // namespace

std::string to_string(TrainLossKind kind) {
  switch (kind) {
    case TrainLossKind::bs_only: return "bs_only";
    case TrainLossKind::bs_scl_uniform: return "bs+scl_uniform";
    case TrainLossKind::bs_scl_aware: return "bs+scl_aware";
    case TrainLossKind::bs_acl_noweight: return "bs+acl_noweight";
    case TrainLossKind::bs_acl: return "bs+acl";
  }
  throw std::logic_error("unreachable loss kind");
}

const std::vector<std::string>& loss_kind_names() {
  static const std::vector<std::string> names = {
      "bs_only", "bs+scl_uniform", "bs+scl_aware", "bs+acl_noweight", "bs+acl"};
  return names;
}

TrainLossKind parse_loss_kind(const std::string& name) {
  if (name == "bs_only") return TrainLossKind::bs_only;
  if (name == "bs+scl_uniform") return TrainLossKind::bs_scl_uniform;
  if (name == "bs+scl_aware") return TrainLossKind::bs_scl_aware;
  if (name == "bs+acl_noweight") return TrainLossKind::bs_acl_noweight;
  if (name == "bs+acl") return TrainLossKind::bs_acl;
  std::string msg = "unknown loss kind '" + name + "'; valid kinds:";
  for (const auto& n : loss_kind_names()) msg += " " + n;
  throw std::invalid_argument(msg);
}

bool kind_has_contrastive(TrainLossKind kind) {
  return kind != TrainLossKind::bs_only;
}

bool kind_uses_centers(TrainLossKind kind) {
  return kind == TrainLossKind::bs_acl_noweight || kind == TrainLossKind::bs_acl;
}

bool kind_uses_uniform_views(TrainLossKind kind) {
  return kind == TrainLossKind::bs_only || kind == TrainLossKind::bs_scl_uniform;
}

ViewPolicy TrainConfig::active_policy() const {
  return view_policy.uniform(uniform_views);
}

bool TrainConfig::contrastive_uses_aware_views() const {
  switch (view_mode) {
    case ViewMode::uniform: return false;
    case ViewMode::aware: return true;
    case ViewMode::by_kind: break;
  }
  return !kind_uses_uniform_views(loss_kind);
}

Model make_model(const EncoderConfig& cfg, int classes, double classifier_tau,
                 double center_momentum, Rng& rng) {
  if (classes < 2) throw std::invalid_argument("need at least two classes");
  if (cfg.embedding_dim < 2)
    throw std::invalid_argument("embedding dimension must be at least 2");
  if (cfg.input_dim < 1) throw std::invalid_argument("input dim must be positive");
  for (int w : cfg.hidden)
    if (w < 1) throw std::invalid_argument("hidden widths must be positive");
  if (!(classifier_tau > 0.0))
    throw std::invalid_argument("classifier tau must be positive");

  Model m;
  m.classes = classes;
  m.encoder.cfg = cfg;
  std::vector<int> dims;
  dims.push_back(cfg.input_dim);
  for (int w : cfg.hidden) dims.push_back(w);
  dims.push_back(cfg.embedding_dim);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const auto rows = static_cast<std::size_t>(dims[l + 1]);
    const auto cols = static_cast<std::size_t>(dims[l]);
    Matrix w(rows, cols);
    const double scale = 1.0 / std::sqrt(static_cast<double>(cols));
    for (double& x : w.data) x = scale * rng.gaussian();
    m.encoder.weights.push_back(std::move(w));
    m.encoder.biases.emplace_back(rows, 0.0);
  }
  const auto h = static_cast<std::size_t>(cfg.embedding_dim);
  m.head.weight = Matrix(static_cast<std::size_t>(classes), h);
  const double head_scale = 1.0 / std::sqrt(static_cast<double>(h));
  for (double& x : m.head.weight.data) x = head_scale * rng.gaussian();
  m.head.scale = 1.0 / classifier_tau;
  m.centers = ClassCenters(classes, cfg.embedding_dim, center_momentum);
  return m;
}

EncoderForward encoder_forward(const Encoder& enc, std::span<const Vec> inputs) {
  const std::size_t S = inputs.size();
  if (S == 0) throw std::invalid_argument("empty input batch");
  const auto in_dim = static_cast<std::size_t>(enc.cfg.input_dim);
  for (const Vec& x : inputs)
    if (x.size() != in_dim)
      throw std::invalid_argument("input dimension mismatch");

  EncoderForward fw;
  fw.input = Matrix(S, in_dim);
  for (std::size_t e = 0; e < S; ++e)
    std::copy(inputs[e].begin(), inputs[e].end(), fw.input.row(e));

  const std::size_t layers = enc.weights.size();
  fw.pre.resize(layers);
  const Matrix* current = &fw.input;
  for (std::size_t l = 0; l < layers; ++l) {
    const Matrix& w = enc.weights[l];
    const Vec& b = enc.biases[l];
    Matrix out(S, w.rows);
    const bool relu_input = l > 0;
    const auto sn = static_cast<std::ptrdiff_t>(S);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t ee = 0; ee < sn; ++ee) {
      const auto e = static_cast<std::size_t>(ee);
      const double* in_row = current->row(e);
      double* out_row = out.row(e);
      for (std::size_t o = 0; o < w.rows; ++o) {
        const double* w_row = w.row(o);
        double s = b[o];
        if (relu_input) {
          for (std::size_t d = 0; d < w.cols; ++d)
            s += w_row[d] * std::max(0.0, in_row[d]);
        } else {
          for (std::size_t d = 0; d < w.cols; ++d) s += w_row[d] * in_row[d];
        }
        out_row[o] = s;
      }
    }
    fw.pre[l] = std::move(out);
    current = &fw.pre[l];
  }

  const Matrix& u = fw.pre.back();
  fw.embed = Matrix(S, u.cols);
  fw.prenorm_lengths.resize(S);
  for (std::size_t e = 0; e < S; ++e) {
    double norm_sq = 0.0;
    const double* ur = u.row(e);
    for (std::size_t d = 0; d < u.cols; ++d) norm_sq += ur[d] * ur[d];
    const double norm = std::sqrt(norm_sq);
    if (!(norm > 1e-12))
      throw std::runtime_error("degenerate embedding norm in forward pass");
    fw.prenorm_lengths[e] = norm;
    double* zr = fw.embed.row(e);
    for (std::size_t d = 0; d < u.cols; ++d) zr[d] = ur[d] / norm;
  }
  return fw;
}

namespace {

// Head rows normalized to unit length plus the original norms. A zero row
// stays zero (its logits are zero and it receives no gradient).
std::pair<Matrix, Vec> normalized_head(const ClassifierHead& head) {
  Matrix what(head.weight.rows, head.weight.cols);
  Vec norms(head.weight.rows);
  for (std::size_t c = 0; c < head.weight.rows; ++c) {
    double norm_sq = 0.0;
    const double* w = head.weight.row(c);
    for (std::size_t d = 0; d < head.weight.cols; ++d) norm_sq += w[d] * w[d];
    const double norm = std::sqrt(norm_sq);
    norms[c] = norm;
    if (norm > 1e-12) {
      double* o = what.row(c);
      for (std::size_t d = 0; d < head.weight.cols; ++d) o[d] = w[d] / norm;
    }
  }
  return {std::move(what), std::move(norms)};
}

struct BatchForward {
  EncoderForward fw;
  Matrix what;
  Vec wnorms;
  Matrix logits;       // S x C
  Matrix dlogits;      // S x C, gradient of the mean BS loss
  double loss_bs = 0.0;
};

BatchForward forward_with_bs(const Model& model, const ComposedBatch& batch,
                             const LongTailedDataset& ds, bool with_grad) {
  const std::size_t S = batch.inputs.size();
  const auto C = static_cast<std::size_t>(model.classes);
  BatchForward bf;
  bf.fw = encoder_forward(model.encoder, batch.inputs);
  auto head = normalized_head(model.head);
  bf.what = std::move(head.first);
  bf.wnorms = std::move(head.second);

  bf.logits = Matrix(S, C);
  const auto sn = static_cast<std::ptrdiff_t>(S);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ee = 0; ee < sn; ++ee) {
    const auto e = static_cast<std::size_t>(ee);
    for (std::size_t c = 0; c < C; ++c)
      bf.logits.at(e, c) =
          model.head.scale * dot(bf.fw.embed.row_span(e), bf.what.row_span(c));
  }

  const auto priors = ds.priors();
  Vec log_priors(C);
  for (std::size_t c = 0; c < C; ++c) log_priors[c] = std::log(priors[c]);

  if (with_grad) bf.dlogits = Matrix(S, C);
  Vec bs_terms(S);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ee = 0; ee < sn; ++ee) {
    const auto e = static_cast<std::size_t>(ee);
    const auto y = static_cast<std::size_t>(batch.labels[e]);
    Vec adj(C);
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < C; ++c) {
      adj[c] = bf.logits.at(e, c) + log_priors[c];
      m = std::max(m, adj[c]);
    }
    double sum = 0.0;
    for (std::size_t c = 0; c < C; ++c) sum += std::exp(adj[c] - m);
    const double lse = m + std::log(sum);
    bs_terms[e] = lse - adj[y];
    if (with_grad) {
      for (std::size_t c = 0; c < C; ++c) {
        const double p = std::exp(adj[c] - lse);
        bf.dlogits.at(e, c) =
            (p - (c == y ? 1.0 : 0.0)) / static_cast<double>(S);
      }
    }
  }
  double loss = 0.0;
  for (std::size_t e = 0; e < S; ++e) loss += bs_terms[e];
  bf.loss_bs = loss / static_cast<double>(S);
  return bf;
}

struct ContrastiveEval {
  ContrastiveBatch cbatch;
  std::vector<std::size_t> selected;  // cbatch sample index -> batch entry
  NegativeWeights weights;
  ContrastiveKind kind = ContrastiveKind::scl;
  double loss = 0.0;
};

// Builds the contrastive view of the batch from the forward embeddings.
// Every composed view feeds Balanced Softmax; the contrastive term sees
// either all of them or each class's distribution-aware share (the first
// views_many/medium/few views by shot group). ACL variants attach every
// initialized center and require the classes present to be initialized.
ContrastiveEval build_contrastive(const Model& model, const BatchForward& bf,
                                  const ComposedBatch& batch,
                                  const LongTailedDataset& ds,
                                  const TrainConfig& cfg) {
  const std::size_t S = batch.inputs.size();
  const auto h = static_cast<std::size_t>(model.encoder.cfg.embedding_dim);
  ContrastiveEval ce;
  const bool aware = cfg.contrastive_uses_aware_views();
  for (std::size_t e = 0; e < S; ++e) {
    if (aware) {
      const long long count =
          ds.class_counts[static_cast<std::size_t>(batch.labels[e])];
      if (batch.views[e] >= assign_views(count, cfg.view_policy)) continue;
    }
    ce.selected.push_back(e);
  }
  std::vector<Embedding> samples;
  samples.reserve(ce.selected.size());
  for (std::size_t e : ce.selected) {
    Vec z(bf.fw.embed.row(e), bf.fw.embed.row(e) + h);
    samples.push_back(Embedding{std::move(z), batch.labels[e], batch.views[e]});
  }
  ce.cbatch = build_batch(std::move(samples), ds.counts_map());

  if (kind_uses_centers(cfg.loss_kind)) {
    for (std::size_t e : ce.selected)
      if (!model.centers.initialized(batch.labels[e]))
        throw std::invalid_argument(
            "class present in batch has no initialized center");
    const auto initialized = model.centers.initialized_classes();
    attach_centers(ce.cbatch, model.centers.centers_for_batch(initialized));
    ce.weights = (cfg.loss_kind == TrainLossKind::bs_acl)
                     ? batch_negative_weights(ce.cbatch)
                     : unit_negative_weights(ce.cbatch);
    ce.kind = ContrastiveKind::acl;
    ce.loss = batch_acl_loss(ce.cbatch, ce.weights, Temperature(cfg.tau)).mean;
  } else {
    ce.kind = ContrastiveKind::scl;
    ce.loss = batch_scl_loss(ce.cbatch, Temperature(cfg.tau)).mean;
  }
  return ce;
}

std::map<int, Vec> batch_class_means(const Matrix& embed,
                                     const std::vector<int>& labels) {
  std::map<int, std::pair<Vec, std::size_t>> sums;
  for (std::size_t e = 0; e < embed.rows; ++e) {
    auto& [sum, n] = sums[labels[e]];
    if (sum.empty()) sum.assign(embed.cols, 0.0);
    const double* z = embed.row(e);
    for (std::size_t d = 0; d < embed.cols; ++d) sum[d] += z[d];
    ++n;
  }
  std::map<int, Vec> means;
  for (auto& [cls, acc] : sums) {
    Vec mean = std::move(acc.first);
    for (double& x : mean) x /= static_cast<double>(acc.second);
    means[cls] = std::move(mean);
  }
  return means;
}

}  // namespace

Matrix head_logits(const ClassifierHead& head, const Matrix& embed) {
  const auto [what, norms] = normalized_head(head);
  Matrix logits(embed.rows, what.rows);
  const auto sn = static_cast<std::ptrdiff_t>(embed.rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ee = 0; ee < sn; ++ee) {
    const auto e = static_cast<std::size_t>(ee);
    const double* z = embed.row(e);
    double* out = logits.row(e);
    for (std::size_t c = 0; c < what.rows; ++c)
      out[c] = head.scale * dot({z, embed.cols}, what.row_span(c));
  }
  return logits;
}

std::pair<Matrix, Matrix> forward(const Model& model, std::span<const Vec> inputs) {
  auto fw = encoder_forward(model.encoder, inputs);
  auto logits = head_logits(model.head, fw.embed);
  return {std::move(fw.embed), std::move(logits)};
}

SgdState make_sgd_state(const Model& model) {
  SgdState s;
  for (const auto& w : model.encoder.weights) s.vel_w.emplace_back(w.rows, w.cols);
  for (const auto& b : model.encoder.biases) s.vel_b.emplace_back(b.size(), 0.0);
  s.vel_head = Matrix(model.head.weight.rows, model.head.weight.cols);
  return s;
}

LossBreakdown evaluate_batch_loss(const Model& model, const ComposedBatch& batch,
                                  const LongTailedDataset& ds,
                                  const TrainConfig& cfg) {
  const auto bf = forward_with_bs(model, batch, ds, /*with_grad=*/false);
  const bool con_active = kind_has_contrastive(cfg.loss_kind) && cfg.alpha > 0.0;
  double loss_con = 0.0;
  if (con_active) loss_con = build_contrastive(model, bf, batch, ds, cfg).loss;
  return combined_loss(loss_con, bf.loss_bs, con_active ? cfg.alpha : 0.0);
}

ModelGradients compute_gradients(const Model& model, const ComposedBatch& batch,
                                 const LongTailedDataset& ds,
                                 const TrainConfig& cfg,
                                 ConflictAccumulator* conflicts) {
  const std::size_t S = batch.inputs.size();
  if (S == 0) throw std::invalid_argument("empty batch");
  const auto C = static_cast<std::size_t>(model.classes);
  const auto h = static_cast<std::size_t>(model.encoder.cfg.embedding_dim);

  auto bf = forward_with_bs(model, batch, ds, /*with_grad=*/true);

  const bool con_active = kind_has_contrastive(cfg.loss_kind) && cfg.alpha > 0.0;
  double loss_con = 0.0;
  Matrix con_grad;
  if (con_active) {
    auto ce = build_contrastive(model, bf, batch, ds, cfg);
    loss_con = ce.loss;
    const NegativeWeights* wp =
        (ce.kind == ContrastiveKind::acl) ? &ce.weights : nullptr;
    auto bg = batch_contrastive_gradient(ce.kind, ce.cbatch, wp, Temperature(cfg.tau));
    if (conflicts != nullptr) conflicts->add(ce.cbatch, bg.coeff);
    // Scatter the subset gradients back onto the composed batch entries.
    con_grad = Matrix(S, h);
    for (std::size_t k = 0; k < ce.selected.size(); ++k)
      std::copy(bg.per_entry.row(k), bg.per_entry.row(k) + h,
                con_grad.row(ce.selected[k]));
  }

  ModelGradients out;
  out.loss = combined_loss(loss_con, bf.loss_bs, con_active ? cfg.alpha : 0.0);

  // d loss / d embedding.
  Matrix dz(S, h);
  const auto sn = static_cast<std::ptrdiff_t>(S);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ee = 0; ee < sn; ++ee) {
    const auto e = static_cast<std::size_t>(ee);
    double* row = dz.row(e);
    for (std::size_t c = 0; c < C; ++c) {
      const double g = bf.dlogits.at(e, c) * model.head.scale;
      if (g == 0.0) continue;
      const double* wc = bf.what.row(c);
      for (std::size_t d = 0; d < h; ++d) row[d] += g * wc[d];
    }
    if (con_active) {
      const double* cg = con_grad.row(e);
      for (std::size_t d = 0; d < h; ++d) row[d] += cfg.alpha * cg[d];
    }
  }

  // Classifier head: Balanced Softmax only, chained through the row
  // normalization. Zero rows stay untrained.
  out.d_head = Matrix(C, h);
  const auto cn = static_cast<std::ptrdiff_t>(C);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t cc = 0; cc < cn; ++cc) {
    const auto c = static_cast<std::size_t>(cc);
    if (!(bf.wnorms[c] > 1e-12)) continue;
    double* row = out.d_head.row(c);
    const double* wc = bf.what.row(c);
    const double inv_norm = 1.0 / bf.wnorms[c];
    for (std::size_t e = 0; e < S; ++e) {
      const double g = bf.dlogits.at(e, c) * model.head.scale;
      if (g == 0.0) continue;
      const double* z = bf.fw.embed.row(e);
      const double zw = dot({z, h}, {wc, h});
      for (std::size_t d = 0; d < h; ++d)
        row[d] += g * (z[d] - zw * wc[d]) * inv_norm;
    }
  }

  // Unit-sphere projection: du = (I - z z^T) dz / ||u||.
  Matrix dpre(S, h);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ee = 0; ee < sn; ++ee) {
    const auto e = static_cast<std::size_t>(ee);
    const double* z = bf.fw.embed.row(e);
    const double* g = dz.row(e);
    const double gz = dot({g, h}, {z, h});
    const double inv_len = 1.0 / bf.fw.prenorm_lengths[e];
    double* row = dpre.row(e);
    for (std::size_t d = 0; d < h; ++d) row[d] = (g[d] - gz * z[d]) * inv_len;
  }

  // Linear/relu stack.
  const std::size_t layers = model.encoder.weights.size();
  out.d_weights.resize(layers);
  out.d_biases.resize(layers);
  for (std::size_t li = layers; li-- > 0;) {
    const Matrix& w = model.encoder.weights[li];
    const Matrix* below = (li == 0) ? &bf.fw.input : &bf.fw.pre[li - 1];
    const bool relu_below = li > 0;

    Matrix dw(w.rows, w.cols);
    Vec db(w.rows, 0.0);
    const auto on = static_cast<std::ptrdiff_t>(w.rows);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t oo = 0; oo < on; ++oo) {
      const auto o = static_cast<std::size_t>(oo);
      double* dw_row = dw.row(o);
      double acc_b = 0.0;
      for (std::size_t e = 0; e < S; ++e) {
        const double g = dpre.at(e, o);
        if (g == 0.0) continue;
        acc_b += g;
        const double* a = below->row(e);
        if (relu_below) {
          for (std::size_t d = 0; d < w.cols; ++d)
            dw_row[d] += g * std::max(0.0, a[d]);
        } else {
          for (std::size_t d = 0; d < w.cols; ++d) dw_row[d] += g * a[d];
        }
      }
      db[o] = acc_b;
    }
    out.d_weights[li] = std::move(dw);
    out.d_biases[li] = std::move(db);

    if (li > 0) {
      Matrix dnext(S, w.cols);
#pragma omp parallel for schedule(static)
      for (std::ptrdiff_t ee = 0; ee < sn; ++ee) {
        const auto e = static_cast<std::size_t>(ee);
        double* row = dnext.row(e);
        const double* g = dpre.row(e);
        const double* pre_below = below->row(e);
        for (std::size_t o = 0; o < w.rows; ++o) {
          if (g[o] == 0.0) continue;
          const double* w_row = w.row(o);
          for (std::size_t d = 0; d < w.cols; ++d) row[d] += g[o] * w_row[d];
        }
        for (std::size_t d = 0; d < w.cols; ++d)
          if (pre_below[d] <= 0.0) row[d] = 0.0;
      }
      dpre = std::move(dnext);
    }
  }

  return out;
}

namespace {

void sgd_update_matrix(Matrix& param, const Matrix& grad, Matrix& vel, double lr,
                       double momentum, double weight_decay) {
  for (std::size_t i = 0; i < param.data.size(); ++i) {
    const double g = grad.data[i] + weight_decay * param.data[i];
    vel.data[i] = momentum * vel.data[i] + g;
    param.data[i] -= lr * vel.data[i];
  }
}

void sgd_update_vec(Vec& param, const Vec& grad, Vec& vel, double lr,
                    double momentum) {
  for (std::size_t i = 0; i < param.size(); ++i) {
    vel[i] = momentum * vel[i] + grad[i];
    param[i] -= lr * vel[i];
  }
}

}  // namespace

LossBreakdown backward_and_step(Model& model, SgdState& sgd,
                                const ComposedBatch& batch,
                                const LongTailedDataset& ds,
                                const TrainConfig& cfg, double lr,
                                ConflictAccumulator* conflicts,
                                std::uint64_t batch_seed) {
  const bool con_active = kind_has_contrastive(cfg.loss_kind) && cfg.alpha > 0.0;

  // First sighting of a class initializes its center from the batch class
  // mean; the loss below then sees pre-update centers.
  std::map<int, Vec> means;
  if (con_active && kind_uses_centers(cfg.loss_kind)) {
    const auto fw = encoder_forward(model.encoder, batch.inputs);
    means = batch_class_means(fw.embed, batch.labels);
    for (const auto& [cls, mean] : means)
      if (!model.centers.initialized(cls)) model.centers.init_center(cls, mean);
  }

  auto grads = compute_gradients(model, batch, ds, cfg, conflicts);
  if (!std::isfinite(grads.loss.total)) {
    std::ostringstream os;
    os << "non-finite loss (contrastive=" << grads.loss.acl
       << ", bs=" << grads.loss.bs << ") on a batch of " << batch.inputs.size()
       << " entries; batch seed 0x" << std::hex << batch_seed
       << " reproduces it via compose_inputs";
    throw std::runtime_error(os.str());
  }

  for (std::size_t l = 0; l < model.encoder.weights.size(); ++l) {
    sgd_update_matrix(model.encoder.weights[l], grads.d_weights[l], sgd.vel_w[l],
                      lr, cfg.momentum, cfg.weight_decay);
    sgd_update_vec(model.encoder.biases[l], grads.d_biases[l], sgd.vel_b[l], lr,
                   cfg.momentum);
  }
  sgd_update_matrix(model.head.weight, grads.d_head, sgd.vel_head, lr,
                    cfg.momentum, cfg.weight_decay);

  // Post-step EMA refresh from this batch's class means (the means of the
  // pre-step forward; centers never see gradients).
  if (con_active && kind_uses_centers(cfg.loss_kind))
    for (const auto& [cls, mean] : means) model.centers.ema_update(cls, mean);

  return grads.loss;
}

Evaluation evaluate(const Model& model, std::span<const Vec> xs,
                    std::span<const int> ys,
                    std::span<const long long> train_counts, long long many_min,
                    long long few_max) {
  if (xs.empty()) throw std::invalid_argument("empty evaluation split");
  if (xs.size() != ys.size()) throw std::invalid_argument("label count mismatch");
  const auto C = static_cast<std::size_t>(model.classes);

  auto [embed, logits] = forward(model, xs);
  std::vector<std::int64_t> correct(C, 0), total(C, 0);
  for (std::size_t e = 0; e < xs.size(); ++e) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < C; ++c)
      if (logits.at(e, c) > logits.at(e, best)) best = c;
    const auto y = static_cast<std::size_t>(ys[e]);
    ++total[y];
    if (best == y) ++correct[y];
  }

  Evaluation ev;
  ev.per_class.resize(C, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    if (total[c] == 0)
      throw std::invalid_argument("evaluation split is missing a class");
    ev.per_class[c] =
        static_cast<double>(correct[c]) / static_cast<double>(total[c]);
  }

  double all = 0.0;
  double sum_many = 0.0, sum_medium = 0.0, sum_few = 0.0;
  std::size_t n_many = 0, n_medium = 0, n_few = 0;
  for (std::size_t c = 0; c < C; ++c) {
    all += ev.per_class[c];
    const long long count = train_counts[c];
    if (count > many_min) {
      sum_many += ev.per_class[c];
      ++n_many;
    } else if (count < few_max) {
      sum_few += ev.per_class[c];
      ++n_few;
    } else {
      sum_medium += ev.per_class[c];
      ++n_medium;
    }
  }
  ev.groups.all = all / static_cast<double>(C);
  if (n_many) ev.groups.many = sum_many / static_cast<double>(n_many);
  if (n_medium) ev.groups.medium = sum_medium / static_cast<double>(n_medium);
  if (n_few) ev.groups.few = sum_few / static_cast<double>(n_few);
  return ev;
}

TrainResult train(const TrainConfig& cfg, const LongTailedDataset& ds) {
  if (ds.spec.classes < 2) throw std::invalid_argument("need at least two classes");
  if (cfg.encoder.input_dim != ds.spec.input_dim)
    throw std::invalid_argument("encoder input dim does not match dataset");
  if (cfg.learning_rate < 0.0)
    throw std::invalid_argument("learning rate must be non-negative");
  if (cfg.alpha < 0.0) throw std::invalid_argument("alpha must be non-negative");
  ViewPolicy policy = cfg.active_policy();
  policy.validate();

  Rng init_rng(mix_seed(cfg.seed, kInitStream));
  TrainResult result{make_model(cfg.encoder, ds.spec.classes, cfg.classifier_tau,
                                cfg.center_momentum, init_rng),
                     {}};
  SgdState sgd = make_sgd_state(result.model);

  const std::size_t train_size = ds.train_x.size();
  const std::size_t bpe = (train_size + cfg.batch_base - 1) / cfg.batch_base;
  const bool monitor = kind_has_contrastive(cfg.loss_kind) && cfg.alpha > 0.0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double lr = cfg.learning_rate;
    for (int decay_at : cfg.lr_decay_epochs)
      if (epoch >= decay_at) lr *= cfg.lr_decay_factor;

    ConflictAccumulator conflicts;
    double sum_total = 0.0, sum_con = 0.0, sum_bs = 0.0;
    for (std::size_t b = 0; b < bpe; ++b) {
      const std::uint64_t batch_seed = mix_seed(
          cfg.seed, kBatchStream,
          static_cast<std::uint64_t>(epoch) * bpe + static_cast<std::uint64_t>(b));
      const auto composed = compose_inputs(ds, cfg.batch_base, policy, batch_seed);
      const auto lb =
          backward_and_step(result.model, sgd, composed, ds, cfg, lr,
                            monitor ? &conflicts : nullptr, batch_seed);
      sum_total += lb.total;
      sum_con += lb.acl;
      sum_bs += lb.bs;
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.loss_total = sum_total / static_cast<double>(bpe);
    m.loss_contrastive = sum_con / static_cast<double>(bpe);
    m.loss_bs = sum_bs / static_cast<double>(bpe);
    const std::span<const long long> counts(ds.class_counts);
    m.train_class_acc = evaluate(result.model, ds.train_x, ds.train_y, counts,
                                 policy.many_min, policy.few_max)
                            .per_class;
    auto test_eval = evaluate(result.model, ds.test_x, ds.test_y, counts,
                              policy.many_min, policy.few_max);
    m.test_class_acc = std::move(test_eval.per_class);
    m.test_groups = test_eval.groups;
    if (monitor) m.conflicts = conflicts.finalize();
    result.trace.rows.push_back(std::move(m));
  }
  return result;
}

ConflictReport diagnose_conflicts(const Model& model, const LongTailedDataset& ds,
                                  const TrainConfig& cfg, int batches) {
  if (batches < 1) throw std::invalid_argument("need at least one batch");
  ViewPolicy policy = cfg.active_policy();
  policy.validate();
  constexpr std::uint64_t kDiagStream = 0x6c74632d64696167ULL;
  const auto h = static_cast<std::size_t>(model.encoder.cfg.embedding_dim);

  ConflictAccumulator acc;
  for (int b = 0; b < batches; ++b) {
    const std::uint64_t seed =
        mix_seed(cfg.seed, kDiagStream, static_cast<std::uint64_t>(b));
    const auto composed = compose_inputs(ds, cfg.batch_base, policy, seed);
    const auto fw = encoder_forward(model.encoder, composed.inputs);
    std::vector<Embedding> samples;
    samples.reserve(composed.inputs.size());
    for (std::size_t e = 0; e < composed.inputs.size(); ++e) {
      Vec z(fw.embed.row(e), fw.embed.row(e) + h);
      samples.push_back(
          Embedding{std::move(z), composed.labels[e], composed.views[e]});
    }
    const auto cbatch = build_batch(std::move(samples), ds.counts_map());
    const auto grad = batch_contrastive_gradient(ContrastiveKind::scl, cbatch,
                                                 nullptr, Temperature(cfg.tau));
    acc.add(cbatch, grad.coeff);
  }
  return acc.finalize();
}

namespace {

void write_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_i64(std::ostream& os, std::int64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_f64(std::ostream& os, double v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_doubles(std::ostream& os, const double* p, std::size_t n) {
  os.write(reinterpret_cast<const char*>(p),
           static_cast<std::streamsize>(n * sizeof(double)));
}
std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
std::int64_t read_i64(std::istream& is) {
  std::int64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
double read_f64(std::istream& is) {
  double v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
void read_doubles(std::istream& is, double* p, std::size_t n) {
  is.read(reinterpret_cast<char*>(p),
          static_cast<std::streamsize>(n * sizeof(double)));
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& path,
                     std::uint64_t config_hash, std::uint64_t seed) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint " + path);
  write_u64(os, kCheckpointMagic);
  write_u64(os, config_hash);
  write_u64(os, seed);
  write_i64(os, model.classes);
  write_i64(os, model.encoder.cfg.input_dim);
  write_i64(os, static_cast<std::int64_t>(model.encoder.cfg.hidden.size()));
  for (int w : model.encoder.cfg.hidden) write_i64(os, w);
  write_i64(os, model.encoder.cfg.embedding_dim);
  write_f64(os, model.head.scale);
  write_f64(os, model.centers.momentum());
  for (const auto& w : model.encoder.weights)
    write_doubles(os, w.data.data(), w.data.size());
  for (const auto& b : model.encoder.biases) write_doubles(os, b.data(), b.size());
  write_doubles(os, model.head.weight.data.data(), model.head.weight.data.size());
  for (int c = 0; c < model.classes; ++c) {
    const bool init = model.centers.initialized(c);
    write_i64(os, init ? 1 : 0);
    if (init)
      write_doubles(os, model.centers.center(c).data(),
                    model.centers.center(c).size());
  }
  if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read checkpoint " + path);
  if (read_u64(is) != kCheckpointMagic)
    throw std::runtime_error("not an ltc checkpoint: " + path);
  LoadedCheckpoint out;
  out.config_hash = read_u64(is);
  out.seed = read_u64(is);
  Model& m = out.model;
  m.classes = static_cast<int>(read_i64(is));
  m.encoder.cfg.input_dim = static_cast<int>(read_i64(is));
  const auto hidden_n = static_cast<std::size_t>(read_i64(is));
  m.encoder.cfg.hidden.resize(hidden_n);
  for (auto& w : m.encoder.cfg.hidden) w = static_cast<int>(read_i64(is));
  m.encoder.cfg.embedding_dim = static_cast<int>(read_i64(is));
  m.head.scale = read_f64(is);
  const double center_momentum = read_f64(is);

  std::vector<int> dims;
  dims.push_back(m.encoder.cfg.input_dim);
  for (int w : m.encoder.cfg.hidden) dims.push_back(w);
  dims.push_back(m.encoder.cfg.embedding_dim);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l)
    m.encoder.weights.emplace_back(static_cast<std::size_t>(dims[l + 1]),
                                   static_cast<std::size_t>(dims[l]));
  for (auto& w : m.encoder.weights) read_doubles(is, w.data.data(), w.data.size());
  for (std::size_t l = 0; l + 1 < dims.size(); ++l)
    m.encoder.biases.emplace_back(static_cast<std::size_t>(dims[l + 1]), 0.0);
  for (auto& b : m.encoder.biases) read_doubles(is, b.data(), b.size());
  m.head.weight = Matrix(static_cast<std::size_t>(m.classes),
                         static_cast<std::size_t>(m.encoder.cfg.embedding_dim));
  read_doubles(is, m.head.weight.data.data(), m.head.weight.data.size());
  m.centers = ClassCenters(m.classes, m.encoder.cfg.embedding_dim, center_momentum);
  for (int c = 0; c < m.classes; ++c) {
    if (read_i64(is) != 0) {
      Vec v(static_cast<std::size_t>(m.encoder.cfg.embedding_dim));
      read_doubles(is, v.data(), v.size());
      m.centers.restore_center(c, std::move(v));
    }
  }
  if (!is) throw std::runtime_error("truncated checkpoint: " + path);
  return out;
}

}  // namespace ltc
