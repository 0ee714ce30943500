#pragma once

#include <span>
#include <vector>

#include "ltc/embedding.hpp"

namespace ltc {

/// Per-class prototype vectors maintained by exponential moving average.
/// Centers are statistics, not parameters: the trainer never routes
/// gradients into them, and an uninitialized center is never served.
class ClassCenters {
 public:
  ClassCenters() = default;
  ClassCenters(int classes, int dim, double momentum);

  int classes() const { return static_cast<int>(centers_.size()); }
  int dim() const { return dim_; }
  double momentum() const { return momentum_; }
  bool initialized(int cls) const;

  /// First sighting of a class: center = normalize(mean). Re-initialization
  /// and zero means throw.
  void init_center(int cls, std::span<const double> batch_class_mean);

  /// raw = momentum * old + (1 - momentum) * normalize(mean); the stored
  /// center is normalize(raw). Exact cancellation keeps the old center and
  /// warns on stderr.
  void ema_update(int cls, std::span<const double> batch_class_mean);
  void ema_update(int cls, std::span<const double> batch_class_mean, double momentum);

  /// One center Embedding per requested class, tagged with the reserved
  /// center view index. Uninitialized classes throw.
  std::vector<Embedding> centers_for_batch(std::span<const int> classes) const;

  /// All currently initialized class ids, ascending.
  std::vector<int> initialized_classes() const;

  const Vec& center(int cls) const;

  /// Checkpoint restore: stores a previously saved center verbatim.
  void restore_center(int cls, Vec center);

 private:
  void check_class(int cls) const;

  std::vector<Vec> centers_;
  std::vector<bool> init_;
  int dim_ = 0;
  double momentum_ = 0.9;
};

}  // namespace ltc
