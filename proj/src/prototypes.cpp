#include "ltc/prototypes.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace ltc {

ClassCenters::ClassCenters(int classes, int dim, double momentum)
    : centers_(static_cast<std::size_t>(classes), Vec(static_cast<std::size_t>(dim), 0.0)),
      init_(static_cast<std::size_t>(classes), false),
      dim_(dim),
      momentum_(momentum) {
  if (classes < 1) throw std::invalid_argument("need at least one class");
  if (dim < 1) throw std::invalid_argument("center dimension must be positive");
  if (momentum < 0.0 || momentum >= 1.0)
    throw std::invalid_argument("momentum must lie in [0,1)");
}

void ClassCenters::check_class(int cls) const {
  if (cls < 0 || cls >= classes())
    throw std::invalid_argument("class id out of range");
}

bool ClassCenters::initialized(int cls) const {
  check_class(cls);
  return init_[static_cast<std::size_t>(cls)];
}

void ClassCenters::init_center(int cls, std::span<const double> batch_class_mean) {
  check_class(cls);
  if (init_[static_cast<std::size_t>(cls)])
    throw std::invalid_argument("center already initialized");
  centers_[static_cast<std::size_t>(cls)] = normalize(batch_class_mean);
  init_[static_cast<std::size_t>(cls)] = true;
}

void ClassCenters::ema_update(int cls, std::span<const double> batch_class_mean) {
  ema_update(cls, batch_class_mean, momentum_);
}

void ClassCenters::ema_update(int cls, std::span<const double> batch_class_mean,
                              double momentum) {
  check_class(cls);
  if (!init_[static_cast<std::size_t>(cls)])
    throw std::invalid_argument("center not initialized");
  if (momentum < 0.0 || momentum >= 1.0)
    throw std::invalid_argument("momentum must lie in [0,1)");
  const Vec target = normalize(batch_class_mean);
  auto& center = centers_[static_cast<std::size_t>(cls)];
  Vec raw(center.size());
  double norm_sq = 0.0;
  for (std::size_t d = 0; d < center.size(); ++d) {
    raw[d] = momentum * center[d] + (1.0 - momentum) * target[d];
    norm_sq += raw[d] * raw[d];
  }
  if (norm_sq == 0.0) {
    std::fprintf(stderr,
                 "ltc: EMA update for class %d cancelled exactly; keeping old center\n",
                 cls);
    return;
  }
  center = normalize(raw);
}

std::vector<Embedding> ClassCenters::centers_for_batch(
    std::span<const int> classes) const {
  std::vector<Embedding> out;
  out.reserve(classes.size());
  for (int cls : classes) {
    check_class(cls);
    if (!init_[static_cast<std::size_t>(cls)])
      throw std::invalid_argument("requested center is uninitialized");
    out.push_back(Embedding{centers_[static_cast<std::size_t>(cls)], cls, kCenterView});
  }
  return out;
}

std::vector<int> ClassCenters::initialized_classes() const {
  std::vector<int> out;
  for (int c = 0; c < classes(); ++c)
    if (init_[static_cast<std::size_t>(c)]) out.push_back(c);
  return out;
}

const Vec& ClassCenters::center(int cls) const {
  check_class(cls);
  if (!init_[static_cast<std::size_t>(cls)])
    throw std::invalid_argument("center not initialized");
  return centers_[static_cast<std::size_t>(cls)];
}

void ClassCenters::restore_center(int cls, Vec center) {
  check_class(cls);
  if (center.size() != static_cast<std::size_t>(dim_))
    throw std::invalid_argument("center dimension mismatch");
  centers_[static_cast<std::size_t>(cls)] = std::move(center);
  init_[static_cast<std::size_t>(cls)] = true;
}

}  // namespace ltc
