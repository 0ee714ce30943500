#pragma once

#include <limits>
#include <span>
#include <vector>

namespace ltc {

using Vec = std::vector<double>;

/// View index reserved for class-center entries so they are never confused
/// with augmented sample views.
inline constexpr int kCenterView = std::numeric_limits<int>::max();

/// Temperature of the similarity scaling. Must be strictly positive.
struct Temperature {
  double tau;
  explicit Temperature(double t);
};

/// A point in the shared latent space. `values` has unit Euclidean norm
/// when built through make_embedding; raw construction is allowed for
/// ambient-space probes in tests.
struct Embedding {
  Vec values;
  int label = 0;
  int view = 0;
};

/// Rescales v to unit Euclidean norm, preserving direction.
/// Throws std::invalid_argument("degenerate embedding") on the zero vector.
Vec normalize(std::span<const double> v);

Embedding make_embedding(Vec values, int label, int view = 0);

/// Temperature-scaled inner product z_i . z_a / tau. Symmetric in the two
/// embeddings; throws on dimension mismatch.
double logit(const Embedding& zi, const Embedding& za, Temperature tau);

/// Softmax over a candidate-set logit sequence, computed with
/// max-subtraction so magnitudes up to ~1e3 cannot overflow.
std::vector<double> candidate_softmax(std::span<const double> logits);

}  // namespace ltc
