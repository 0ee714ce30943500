#include "ltc/reference.hpp"

#include <cmath>
#include <stdexcept>

namespace ltc::ref {

namespace {

double sim(const ContrastiveBatch& b, std::size_t i, std::size_t j) {
  const auto& x = b.entries[i].values;
  const auto& y = b.entries[j].values;
  double s = 0.0;
  for (std::size_t d = 0; d < x.size(); ++d) s += x[d] * y[d];
  return s;
}

}  // namespace

double scl_pairwise_loss(const ContrastiveBatch& b, std::size_t i, std::size_t p,
                         double tau) {
  double denom = 0.0;
  for (std::size_t a : b.candidates[i]) denom += std::exp(sim(b, i, a) / tau);
  return -std::log(std::exp(sim(b, i, p) / tau) / denom);
}

double scl_loss(const ContrastiveBatch& b, std::size_t i, double tau) {
  const auto& P = b.positives[i];
  if (P.empty()) throw std::invalid_argument("anchor has no positives");
  double sum = 0.0;
  for (std::size_t p : P) sum += scl_pairwise_loss(b, i, p, tau);
  return sum / static_cast<double>(P.size());
}

double acl_loss_without_center(const ContrastiveBatch& b, std::size_t i, double tau) {
  const auto& P = b.positives[i];
  if (P.empty()) throw std::invalid_argument("anchor has no positives");
  double sum = 0.0;
  for (std::size_t p : P) {
    double denom = std::exp(sim(b, i, p) / tau);
    for (std::size_t n : b.negatives[i]) denom += std::exp(sim(b, i, n) / tau);
    sum += -std::log(std::exp(sim(b, i, p) / tau) / denom);
  }
  return sum / static_cast<double>(P.size());
}

double acl_loss(const ContrastiveBatch& b, std::size_t i,
                const NegativeWeights& w, double tau) {
  const std::size_t c = b.center_index[i];
  if (c == ContrastiveBatch::npos)
    throw std::invalid_argument("anchor has no class center");
  if (b.negatives[i].empty())
    throw std::invalid_argument("anchor has no negatives");
  // Relative weights rescaled to mean one over this anchor's negatives.
  double raw_sum = 0.0;
  for (std::size_t n : b.negatives[i]) raw_sum += w.by_entry[n];
  const double rescale = static_cast<double>(b.negatives[i].size()) / raw_sum;
  std::vector<std::size_t> pos(b.positives[i].begin(), b.positives[i].end());
  pos.push_back(c);
  double sum = 0.0;
  for (std::size_t p : pos) {
    const double ep = std::exp(sim(b, i, p) / tau);
    double denom = ep;
    for (std::size_t n : b.negatives[i])
      denom += rescale * w.by_entry[n] * std::exp(sim(b, i, n) / tau);
    sum += -std::log(ep / denom);
  }
  return sum / static_cast<double>(pos.size());
}

std::vector<Vec> scl_instance_grad(const ContrastiveBatch& b, std::size_t i,
                                   double tau) {
  const auto& A = b.candidates[i];
  const auto& P = b.positives[i];
  if (P.empty()) throw std::invalid_argument("anchor has no positives");
  const std::size_t h = b.dim();
  std::vector<Vec> grads(A.size(), Vec(h, 0.0));
  // Average of the per-pair fields: effective positive -(1-q)/tau z_i,
  // everything else +q/tau z_i, each pair's q recomputed directly.
  for (std::size_t p : P) {
    double denom = 0.0;
    for (std::size_t a : A) denom += std::exp(sim(b, i, a) / tau);
    for (std::size_t k = 0; k < A.size(); ++k) {
      const double q = std::exp(sim(b, i, A[k]) / tau) / denom;
      const double coeff = (A[k] == p) ? -(1.0 - q) / tau : q / tau;
      for (std::size_t d = 0; d < h; ++d)
        grads[k][d] += coeff * b.entries[i].values[d] / static_cast<double>(P.size());
    }
  }
  return grads;
}

double batch_scl_mean(const ContrastiveBatch& b, double tau) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < b.sample_count; ++i) {
    if (b.positives[i].empty() || b.candidates[i].size() < 2) continue;
    sum += scl_loss(b, i, tau);
    ++count;
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

double batch_acl_mean(const ContrastiveBatch& b, const NegativeWeights& w,
                      double tau) {
  double sum = 0.0;
  for (std::size_t i = 0; i < b.sample_count; ++i) sum += acl_loss(b, i, w, tau);
  return b.sample_count ? sum / static_cast<double>(b.sample_count) : 0.0;
}

Matrix batch_scl_gradient(const ContrastiveBatch& b, double tau) {
  const std::size_t h = b.dim();
  Matrix g(b.entries.size(), h);
  std::size_t count = 0;
  for (std::size_t i = 0; i < b.sample_count; ++i)
    if (!b.positives[i].empty() && b.candidates[i].size() >= 2) ++count;
  if (count == 0) return g;
  const double reduce_w = 1.0 / static_cast<double>(count);

  for (std::size_t i = 0; i < b.sample_count; ++i) {
    const auto& P = b.positives[i];
    const auto& A = b.candidates[i];
    if (P.empty() || A.size() < 2) continue;
    double denom = 0.0;
    for (std::size_t a : A) denom += std::exp(sim(b, i, a) / tau);
    const double inv_p = 1.0 / static_cast<double>(P.size());
    for (std::size_t k = 0; k < A.size(); ++k) {
      const double q = std::exp(sim(b, i, A[k]) / tau) / denom;
      bool is_pos = false;
      for (std::size_t p : P) is_pos |= (p == A[k]);
      const double coeff = (is_pos ? -(inv_p - q) : q) / tau * reduce_w;
      // candidate role
      for (std::size_t d = 0; d < h; ++d)
        g.at(A[k], d) += coeff * b.entries[i].values[d];
      // anchor role
      for (std::size_t d = 0; d < h; ++d)
        g.at(i, d) += coeff * b.entries[A[k]].values[d];
    }
  }
  return g;
}

std::map<int, std::pair<long long, long long>> conflict_recount(
    const ContrastiveBatch& b, double tau) {
  std::map<int, std::pair<long long, long long>> out;
  for (std::size_t i = 0; i < b.sample_count; ++i) {
    const auto& P = b.positives[i];
    if (P.empty() || b.candidates[i].size() < 2) continue;
    double denom = 0.0;
    for (std::size_t a : b.candidates[i]) denom += std::exp(sim(b, i, a) / tau);
    auto& [pairs, repulsive] = out[b.entries[i].label];
    for (std::size_t p : P) {
      const double q = std::exp(sim(b, i, p) / tau) / denom;
      ++pairs;
      if (q > 1.0 / static_cast<double>(P.size())) ++repulsive;
    }
  }
  return out;
}

}  // namespace ltc::ref
