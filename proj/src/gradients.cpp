#include "ltc/gradients.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace ltc {

namespace {

std::vector<double> anchor_logits(const ContrastiveBatch& b, std::size_t i,
                                  std::span<const std::size_t> ids, double tau) {
  std::vector<double> f(ids.size());
  const auto& zi = b.entries[i].values;
  for (std::size_t k = 0; k < ids.size(); ++k)
    f[k] = dot(zi, b.entries[ids[k]].values) / tau;
  return f;
}

// State shared by the ACL gradient formulas for one anchor: per-term
// shifted denominators e^{f_p - M_p} + S e^{m - M_p} with S the weighted
// negative mass.
struct AclAnchorState {
  std::vector<std::size_t> pos_ids;   // P(i) then the center
  std::vector<double> pos_logits;     // f_p
  std::vector<double> shift;          // M_p = max(f_p, m)
  std::vector<double> denom_shifted;  // e^{f_p-M_p} + S e^{m-M_p}
  std::vector<double> neg_g;          // f_n + log w_n, aligned with N(i)
  double neg_max = 0.0;               // m
};

AclAnchorState acl_state(const ContrastiveBatch& b, std::size_t i,
                         const NegativeWeights& w, double tau) {
  const auto& P = b.positives[i];
  const auto& N = b.negatives[i];
  const std::size_t c = b.center_index[i];
  if (c == ContrastiveBatch::npos)
    throw std::invalid_argument("anchor has no class center");
  if (N.empty()) throw std::invalid_argument("anchor has no negatives");
  if (w.by_entry.size() != b.entries.size())
    throw std::invalid_argument("weight table size mismatch");

  AclAnchorState st;
  st.pos_ids.assign(P.begin(), P.end());
  st.pos_ids.push_back(c);
  st.pos_logits = anchor_logits(b, i, st.pos_ids, tau);

  // Per-anchor rescale of the relative weights to mean 1 over N(i),
  // matching the loss definition.
  double raw_sum = 0.0;
  for (std::size_t n : N) {
    const double wn = w.by_entry[n];
    if (!(wn > 0.0)) throw std::invalid_argument("negative weight must be positive");
    raw_sum += wn;
  }
  const double log_rescale = std::log(static_cast<double>(N.size()) / raw_sum);

  st.neg_g = anchor_logits(b, i, N, tau);
  st.neg_max = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < N.size(); ++k) {
    st.neg_g[k] += std::log(w.by_entry[N[k]]) + log_rescale;
    st.neg_max = std::max(st.neg_max, st.neg_g[k]);
  }
  double mass = 0.0;
  for (double g : st.neg_g) mass += std::exp(g - st.neg_max);

  st.shift.resize(st.pos_ids.size());
  st.denom_shifted.resize(st.pos_ids.size());
  for (std::size_t k = 0; k < st.pos_ids.size(); ++k) {
    const double fp = st.pos_logits[k];
    const double M = std::max(fp, st.neg_max);
    st.shift[k] = M;
    st.denom_shifted[k] = std::exp(fp - M) + mass * std::exp(st.neg_max - M);
  }
  return st;
}

}  // namespace

Vec GradientField::vector_for(const ContrastiveBatch& batch, std::size_t k) const {
  const auto& zi = batch.entries[anchor].values;
  Vec g(zi.size());
  for (std::size_t d = 0; d < zi.size(); ++d) g[d] = coefficients[k] * zi[d];
  return g;
}

GradientField scl_pairwise_grad(const ContrastiveBatch& batch, std::size_t i,
                                std::size_t p, Temperature tau) {
  const auto& P = batch.positives[i];
  if (!std::binary_search(P.begin(), P.end(), p))
    throw std::invalid_argument("not a positive");
  const auto& A = batch.candidates[i];
  if (A.size() < 2) throw std::invalid_argument("no contrast");
  const auto f = anchor_logits(batch, i, A, tau.tau);
  const auto q = candidate_softmax(f);
  GradientField out;
  out.anchor = i;
  out.indices.assign(A.begin(), A.end());
  out.coefficients.resize(A.size());
  for (std::size_t k = 0; k < A.size(); ++k)
    out.coefficients[k] =
        (A[k] == p) ? -(1.0 - q[k]) / tau.tau : q[k] / tau.tau;
  return out;
}

GradientField scl_instance_grad(const ContrastiveBatch& batch, std::size_t i,
                                Temperature tau) {
  const auto& P = batch.positives[i];
  if (P.empty()) throw std::invalid_argument("anchor has no positives");
  const auto& A = batch.candidates[i];
  if (A.size() < 2) throw std::invalid_argument("no contrast");
  const auto f = anchor_logits(batch, i, A, tau.tau);
  const auto q = candidate_softmax(f);
  const double inv_p = 1.0 / static_cast<double>(P.size());
  GradientField out;
  out.anchor = i;
  out.indices.assign(A.begin(), A.end());
  out.coefficients.resize(A.size());
  for (std::size_t k = 0; k < A.size(); ++k) {
    const bool is_positive = std::binary_search(P.begin(), P.end(), A[k]);
    out.coefficients[k] =
        is_positive ? -(inv_p - q[k]) / tau.tau : q[k] / tau.tau;
  }
  return out;
}

double nabla(std::size_t p_count, double q) {
  if (p_count == 0) throw std::invalid_argument("p_count must be at least 1");
  if (q < 0.0 || q > 1.0) throw std::invalid_argument("q must lie in [0,1]");
  return 1.0 / static_cast<double>(p_count) - q;
}

GradientField acl_positive_grad(const ContrastiveBatch& batch, std::size_t i,
                                const NegativeWeights& weights, Temperature tau) {
  const auto st = acl_state(batch, i, weights, tau.tau);
  const double scale =
      1.0 / (tau.tau * static_cast<double>(batch.positives[i].size() + 1));
  GradientField out;
  out.anchor = i;
  out.indices = st.pos_ids;
  out.coefficients.resize(st.pos_ids.size());
  for (std::size_t k = 0; k < st.pos_ids.size(); ++k) {
    const double q =
        std::exp(st.pos_logits[k] - st.shift[k]) / st.denom_shifted[k];
    out.coefficients[k] = -(1.0 - q) * scale;
  }
  return out;
}

GradientField acl_negative_grad(const ContrastiveBatch& batch, std::size_t i,
                                const NegativeWeights& weights, Temperature tau) {
  const auto st = acl_state(batch, i, weights, tau.tau);
  const auto& N = batch.negatives[i];
  const double scale =
      1.0 / (tau.tau * static_cast<double>(batch.positives[i].size() + 1));
  GradientField out;
  out.anchor = i;
  out.indices.assign(N.begin(), N.end());
  out.coefficients.resize(N.size());
  for (std::size_t k = 0; k < N.size(); ++k) {
    double s = 0.0;
    for (std::size_t t = 0; t < st.pos_ids.size(); ++t)
      s += std::exp(st.neg_g[k] - st.shift[t]) / st.denom_shifted[t];
    out.coefficients[k] = s * scale;
  }
  return out;
}

Vec anchor_grad(ContrastiveKind kind, const ContrastiveBatch& batch, std::size_t i,
                const NegativeWeights* weights, Temperature tau) {
  Vec g(batch.dim(), 0.0);
  auto accumulate = [&](const GradientField& field) {
    for (std::size_t k = 0; k < field.indices.size(); ++k) {
      const auto& zk = batch.entries[field.indices[k]].values;
      for (std::size_t d = 0; d < g.size(); ++d)
        g[d] += field.coefficients[k] * zk[d];
    }
  };
  if (kind == ContrastiveKind::scl) {
    accumulate(scl_instance_grad(batch, i, tau));
  } else {
    if (weights == nullptr)
      throw std::invalid_argument("ACL anchor gradient needs negative weights");
    accumulate(acl_positive_grad(batch, i, *weights, tau));
    accumulate(acl_negative_grad(batch, i, *weights, tau));
  }
  return g;
}

Vec finite_difference_oracle(const std::function<double(std::span<const double>)>& f,
                             std::span<const double> point, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("step must be positive");
  Vec x(point.begin(), point.end());
  Vec grad(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double saved = x[j];
    x[j] = saved + step;
    const double up = f(x);
    x[j] = saved - step;
    const double down = f(x);
    x[j] = saved;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw std::runtime_error("non-finite evaluation in finite differences");
    grad[j] = (up - down) / (2.0 * step);
  }
  return grad;
}

BatchGradient batch_contrastive_gradient(ContrastiveKind kind,
                                         const ContrastiveBatch& batch,
                                         const NegativeWeights* weights,
                                         Temperature tau) {
  const std::size_t S = batch.sample_count;
  const std::size_t E = batch.entries.size();
  const std::size_t h = batch.dim();

  // Eligibility mirrors the batch loss kernels: SCL skips anchors without
  // positives, ACL skips anchors without a center or without negatives.
  // All contract checks happen before the parallel regions.
  if (kind == ContrastiveKind::acl) {
    if (weights == nullptr)
      throw std::invalid_argument("ACL batch gradient needs negative weights");
    if (weights->by_entry.size() != batch.entries.size())
      throw std::invalid_argument("weight table size mismatch");
    for (double w : weights->by_entry)
      if (!(w > 0.0))
        throw std::invalid_argument("negative weight must be positive");
  }
  std::vector<std::uint8_t> eligible(S, 0);
  for (std::size_t i = 0; i < S; ++i) {
    if (kind == ContrastiveKind::scl)
      eligible[i] = !batch.positives[i].empty() && batch.candidates[i].size() >= 2;
    else
      eligible[i] = batch.center_index[i] != ContrastiveBatch::npos &&
                    !batch.negatives[i].empty();
  }

  BatchGradient out;
  out.coeff = Matrix(S, E);
  out.per_entry = Matrix(E, h);
  for (std::size_t i = 0; i < S; ++i) out.contributing += eligible[i];
  if (out.contributing == 0) return out;
  const double reduce_w = 1.0 / static_cast<double>(out.contributing);

  const auto sn = static_cast<std::ptrdiff_t>(S);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < sn; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    if (!eligible[i]) continue;
    double* row = out.coeff.row(i);
    if (kind == ContrastiveKind::scl) {
      const auto field = scl_instance_grad(batch, i, tau);
      for (std::size_t k = 0; k < field.indices.size(); ++k)
        row[field.indices[k]] = field.coefficients[k] * reduce_w;
    } else {
      const auto pos = acl_positive_grad(batch, i, *weights, tau);
      for (std::size_t k = 0; k < pos.indices.size(); ++k)
        row[pos.indices[k]] = pos.coefficients[k] * reduce_w;
      const auto neg = acl_negative_grad(batch, i, *weights, tau);
      for (std::size_t k = 0; k < neg.indices.size(); ++k)
        row[neg.indices[k]] = neg.coefficients[k] * reduce_w;
    }
  }

  // Candidate role: d/dz_k picks up coeff(i,k) z_i from every anchor i.
  // Center rows stay zero (stop-gradient).
  const auto en = static_cast<std::ptrdiff_t>(S);  // only sample rows
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t kk = 0; kk < en; ++kk) {
    const auto k = static_cast<std::size_t>(kk);
    double* gk = out.per_entry.row(k);
    for (std::size_t i = 0; i < S; ++i) {
      const double c = out.coeff.at(i, k);
      if (c == 0.0) continue;
      const auto& zi = batch.entries[i].values;
      for (std::size_t d = 0; d < h; ++d) gk[d] += c * zi[d];
    }
  }

  // Anchor role: d/dz_i additionally picks up sum_k coeff(i,k) z_k.
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < sn; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    if (!eligible[i]) continue;
    double* gi = out.per_entry.row(i);
    const double* row = out.coeff.row(i);
    for (std::size_t k = 0; k < E; ++k) {
      if (row[k] == 0.0) continue;
      const auto& zk = batch.entries[k].values;
      for (std::size_t d = 0; d < h; ++d) gi[d] += row[k] * zk[d];
    }
  }

  return out;
}

}  // namespace ltc
