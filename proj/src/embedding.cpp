#include "ltc/embedding.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace ltc {

Temperature::Temperature(double t) : tau(t) {
  if (!(t > 0.0)) throw std::invalid_argument("temperature must be positive");
}

Vec normalize(std::span<const double> v) {
  double norm_sq = 0.0;
  for (double x : v) norm_sq += x * x;
  if (norm_sq == 0.0) throw std::invalid_argument("degenerate embedding");
  const double inv = 1.0 / std::sqrt(norm_sq);
  Vec out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] * inv;
  return out;
}

Embedding make_embedding(Vec values, int label, int view) {
  return Embedding{normalize(values), label, view};
}

double logit(const Embedding& zi, const Embedding& za, Temperature tau) {
  if (zi.values.size() != za.values.size())
    throw std::invalid_argument("embedding dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < zi.values.size(); ++i)
    s += zi.values[i] * za.values[i];
  return s / tau.tau;
}

std::vector<double> candidate_softmax(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("empty candidate set");
  double max_logit = logits[0];
  for (double f : logits) max_logit = std::max(max_logit, f);
  std::vector<double> out(logits.size());
  double denom = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - max_logit);
    denom += out[i];
  }
  const double inv = 1.0 / denom;
  for (double& q : out) q *= inv;
  return out;
}

}  // namespace ltc
