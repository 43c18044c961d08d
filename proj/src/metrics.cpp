#include "hgseg/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace hgseg {

ConfusionMatrix::ConfusionMatrix(int num_classes)
    : k_(num_classes), m_(size_t(num_classes) * size_t(num_classes), 0) {}

void ConfusionMatrix::add(const std::vector<int64_t>& pred,
                          const std::vector<int64_t>& gt) {
  if (pred.size() != gt.size())
    throw std::invalid_argument("ConfusionMatrix: size mismatch");
  for (size_t i = 0; i < pred.size(); ++i) {
    int64_t g = gt[i];
    if (g < 0 || g >= k_) continue;  // ignore label
    int64_t p = pred[i];
    if (p < 0 || p >= k_)
      throw std::invalid_argument("ConfusionMatrix: prediction out of range");
    m_[size_t(g) * size_t(k_) + size_t(p)] += 1;
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.k_ != k_)
    throw std::invalid_argument("ConfusionMatrix: merge class count mismatch");
  for (size_t i = 0; i < m_.size(); ++i) m_[i] += other.m_[i];
}

IoUReport ConfusionMatrix::report() const {
  IoUReport r;
  r.per_class.resize(size_t(k_));
  r.class_valid.resize(size_t(k_));
  double sum = 0;
  int valid = 0;
  for (int c = 0; c < k_; ++c) {
    uint64_t tp = m_[size_t(c) * size_t(k_) + size_t(c)];
    uint64_t fn = 0, fp = 0;
    for (int o = 0; o < k_; ++o) {
      if (o == c) continue;
      fn += m_[size_t(c) * size_t(k_) + size_t(o)];
      fp += m_[size_t(o) * size_t(k_) + size_t(c)];
    }
    uint64_t denom = tp + fp + fn;
    bool present = denom > 0;  // absent from both pred and gt -> excluded
    r.class_valid[size_t(c)] = present;
    if (present) {
      r.per_class[size_t(c)] = double(tp) / double(denom);
      sum += r.per_class[size_t(c)];
      ++valid;
    } else {
      r.per_class[size_t(c)] = std::numeric_limits<double>::quiet_NaN();
    }
  }
  r.miou = valid ? sum / valid : 0.0;
  return r;
}

IoUReport compute_miou(const std::vector<int64_t>& pred,
                       const std::vector<int64_t>& gt, int num_classes) {
  ConfusionMatrix cm(num_classes);
  cm.add(pred, gt);
  return cm.report();
}

}  // namespace hgseg
