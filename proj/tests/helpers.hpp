#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "hgseg/rng.hpp"
#include "hgseg/tensor.hpp"

namespace hgseg::test {

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3});
}

inline Tensor random_tensor(const Shape& s, Rng& rng, bool requires_grad = true,
                            real lo = real(-1), real hi = real(1)) {
  std::uniform_real_distribution<double> uni{double(lo), double(hi)};
  std::vector<real> d(shape_numel(s));
  for (auto& x : d) x = real(uni(rng));
  return Tensor::from_data(s, std::move(d), requires_grad);
}

// Central finite differences on every element of every input, compared to
// reverse-mode gradients of the scalar loss_fn(inputs).
inline double max_grad_rel_err(const std::function<Tensor()>& loss_fn,
                               std::vector<Tensor> inputs,
                               real h = real(1e-5)) {
  for (auto& t : inputs) t.zero_grad();
  Tensor loss = loss_fn();
  loss.backward();
  double worst = 0;
  for (auto& t : inputs) {
    REQUIRE(t.grad().size() == t.numel());
    for (size_t i = 0; i < t.numel(); ++i) {
      real saved = t.mutable_data()[i];
      t.mutable_data()[i] = saved + h;
      double up;
      {
        NoGradGuard ng;
        up = double(loss_fn().item());
      }
      t.mutable_data()[i] = saved - h;
      double dn;
      {
        NoGradGuard ng;
        dn = double(loss_fn().item());
      }
      t.mutable_data()[i] = saved;
      double fd = (up - dn) / (2.0 * double(h));
      worst = std::max(worst, rel_err(double(t.grad()[i]), fd));
    }
  }
  return worst;
}

}  // namespace hgseg::test
