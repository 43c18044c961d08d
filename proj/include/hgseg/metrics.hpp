#pragma once

#include <cstdint>
#include <vector>

namespace hgseg {

struct IoUReport {
  std::vector<double> per_class;   // NaN for classes absent from pred and gt
  std::vector<bool> class_valid;   // included in the mean
  double miou = 0;
};

// Streaming confusion matrix over K classes; negative gt labels are ignored.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes);
  void add(const std::vector<int64_t>& pred, const std::vector<int64_t>& gt);
  void merge(const ConfusionMatrix& other);
  IoUReport report() const;
  const std::vector<uint64_t>& counts() const { return m_; }

 private:
  int k_;
  std::vector<uint64_t> m_;  // [gt * k + pred]
};

IoUReport compute_miou(const std::vector<int64_t>& pred,
                       const std::vector<int64_t>& gt, int num_classes);

}  // namespace hgseg
