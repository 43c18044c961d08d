#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "hgseg/inference.hpp"
#include "hgseg/losses.hpp"
#include "hgseg/metrics.hpp"
#include "helpers.hpp"

using namespace hgseg;
using namespace hgseg::test;

namespace {

constexpr real kNinf = -std::numeric_limits<real>::infinity();

AssignmentMatrix make_assignment(const GridSpec& g, Rng& rng) {
  std::uniform_real_distribution<double> uni(-2, 2);
  Tensor D = Tensor::zeros({g.num_pixels(), 9});
  auto& dd = D.mutable_data();
  for (size_t j = 0; j < g.num_pixels(); ++j)
    for (size_t s = 0; s < 9; ++s)
      dd[j * 9 + s] = g.window[j * 9 + s] < 0 ? kNinf : real(uni(rng));
  return soft_assign(D);
}

}  // namespace

TEST_CASE("part output assembly") {
  GridSpec g = GridSpec::make(8, 8, 4);
  Rng rng(3);

  // hard assignment + one-hot class probs -> one-hot per pixel
  Tensor D = Tensor::zeros({64, 9});
  auto& dd = D.mutable_data();
  for (size_t j = 0; j < 64; ++j)
    for (size_t s = 0; s < 9; ++s) {
      int64_t c = g.window[j * 9 + s];
      dd[j * 9 + s] = c < 0 ? kNinf : (c == g.home[j] ? real(500) : real(0));
    }
  AssignmentMatrix hard = soft_assign(D);
  Tensor P = Tensor::zeros({4, 3});
  auto& pd = P.mutable_data();
  for (size_t p = 0; p < 4; ++p) pd[p * 3 + p % 3] = 1;
  Tensor O1 = assemble_part_output(P, hard, g);
  for (size_t j = 0; j < 64; ++j) {
    size_t cls = size_t(g.home[j]) % 3;
    CHECK(double(O1.at(j * 3 + cls)) == doctest::Approx(1.0).epsilon(1e-9));
  }

  // uniform class probabilities -> uniform per-pixel scores
  Tensor Pu = Tensor::full({4, 3}, real(1.0 / 3));
  AssignmentMatrix A = make_assignment(g, rng);
  Tensor O1u = assemble_part_output(Pu, A, g);
  for (size_t i = 0; i < O1u.numel(); ++i)
    CHECK(double(O1u.at(i)) == doctest::Approx(1.0 / 3).epsilon(1e-9));

  // windowed assembly equals dense P_m^T x A-dense; columns sum to 1
  Tensor Pr = softmax(random_tensor({4, 3}, rng, false), 1);
  Tensor O1r = assemble_part_output(Pr, A, g);
  for (size_t j = 0; j < 64; ++j) {
    double colsum = 0;
    for (size_t k = 0; k < 3; ++k) {
      double dense = 0;
      for (size_t s = 0; s < 9; ++s) {
        int64_t c = g.window[j * 9 + s];
        if (c < 0) continue;
        dense += double(A.weights.at(j * 9 + s)) * double(Pr.at(size_t(c) * 3 + k));
      }
      CHECK(std::abs(double(O1r.at(j * 3 + k)) - dense) < 1e-9);
      colsum += dense;
    }
    CHECK(colsum == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("whole output assembly") {
  // single query, one-hot on class 1 (of K=3, col 3 = no-object), mask all 1
  Tensor P = Tensor::from_data({1, 4}, {0, 1, 0, 0});
  Tensor M = Tensor::full({1, 6}, real(1));
  Tensor O2 = assemble_whole_output(P, M);
  for (size_t j = 0; j < 6; ++j) {
    CHECK(double(O2.at(j * 3 + 1)) == doctest::Approx(1.0));
    CHECK(double(O2.at(j * 3 + 0)) == doctest::Approx(0.0));
  }

  // all mass on no-object -> O2 is zero
  Tensor Pn = Tensor::from_data({1, 4}, {0, 0, 0, 1});
  Tensor O2n = assemble_whole_output(Pn, M);
  for (size_t i = 0; i < O2n.numel(); ++i) CHECK(O2n.at(i) == 0.0);

  // two-query hand case
  Tensor P2 = Tensor::from_data({2, 4}, {real(0.6), real(0.2), real(0.1), real(0.1),
                                         real(0.1), real(0.7), real(0.1), real(0.1)});
  Tensor M2 = Tensor::from_data({2, 2}, {real(0.9), real(0.2),  //
                                         real(0.3), real(0.8)});
  Tensor O22 = assemble_whole_output(P2, M2);
  // pixel 0, class 0: 0.6*0.9 + 0.1*0.3
  CHECK(double(O22.at(0)) == doctest::Approx(0.6 * 0.9 + 0.1 * 0.3).epsilon(1e-12));
  // pixel 1, class 1: 0.2*0.2 + 0.7*0.8
  CHECK(double(O22.at(1 * 3 + 1)) ==
        doctest::Approx(0.2 * 0.2 + 0.7 * 0.8).epsilon(1e-12));
  for (size_t i = 0; i < O22.numel(); ++i) CHECK(O22.at(i) >= 0.0);
}

TEST_CASE("ensemble and argmax") {
  Rng rng(7);
  Tensor O1 = softmax(random_tensor({6, 3}, rng, false), 1);
  Tensor O2 = Tensor::zeros({6, 3});
  // O2 = 0 -> ensemble argmax equals part argmax
  auto lab1 = argmax_labels(O1);
  auto labE = argmax_labels(add(O1, O2));
  CHECK(lab1 == labE);
  // O1 = O2 -> same argmax as either
  auto labD = argmax_labels(add(O1, O1));
  CHECK(labD == lab1);
  // ties break to the lowest class id
  Tensor tie = Tensor::from_data({1, 3}, {real(0.4), real(0.4), real(0.2)});
  CHECK(argmax_labels(tie)[0] == 0);

  // conflicting scales on a 2x2 toy, hand argmax
  Tensor a = Tensor::from_data({4, 2}, {real(0.9), real(0.1),  //
                                        real(0.2), real(0.8),  //
                                        real(0.6), real(0.4),  //
                                        real(0.5), real(0.5)});
  Tensor b = Tensor::from_data({4, 2}, {real(0.1), real(0.5),  //
                                        real(0.9), real(0.0),  //
                                        real(0.0), real(0.3),  //
                                        real(0.2), real(0.1)});
  auto lab = argmax_labels(add(a, b));
  CHECK(lab == std::vector<int64_t>{0, 0, 1, 0});
}

TEST_CASE("score resampling and label upsampling") {
  // 2x2 -> 4x4 nearest: each source cell covers a 2x2 block
  Tensor s = Tensor::from_data({4, 1}, {1, 2, 3, 4});
  Tensor up = resample_scores(s, 2, 2, 4, 4);
  CHECK(up.rows() == 16);
  CHECK(double(up.at(0)) == 1);
  CHECK(double(up.at(3)) == 2);
  CHECK(double(up.at(15)) == 4);
  std::vector<int64_t> l = {0, 1, 2, 3};
  auto ul = upsample_labels(l, 2, 2, 4, 4);
  CHECK(ul[0] == 0);
  CHECK(ul[5] == 0);
  CHECK(ul[10] == 2);
  CHECK(ul[15] == 3);
}

TEST_CASE("miou") {
  std::vector<int64_t> gt = {0, 0, 1, 1};
  CHECK(compute_miou(gt, gt, 2).miou == doctest::Approx(1.0));

  std::vector<int64_t> comp = {1, 1, 0, 0};
  IoUReport r = compute_miou(comp, gt, 2);
  CHECK(r.per_class[0] == doctest::Approx(0.0));
  CHECK(r.per_class[1] == doctest::Approx(0.0));
  CHECK(r.miou == doctest::Approx(0.0));

  // hand-built 4x4 confusion case
  std::vector<int64_t> g2 = {0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2, 0, 1, 2, kIgnoreLabel};
  std::vector<int64_t> p2 = {0, 0, 1, 0, 1, 1, 1, 2, 2, 2, 0, 2, 0, 1, 2, 1};
  // class 0: tp=4 fp=1 fn=1 -> 4/6; class 1: tp=4 fp=2 fn=1 -> 4/7
  // class 2: tp=4 fp=1 fn=1 -> 4/6 (ignored gt pixel excluded)
  IoUReport r2 = compute_miou(p2, g2, 3);
  CHECK(r2.per_class[0] == doctest::Approx(4.0 / 6));
  CHECK(r2.per_class[1] == doctest::Approx(4.0 / 7));
  CHECK(r2.per_class[2] == doctest::Approx(4.0 / 6));
  CHECK(r2.miou == doctest::Approx((4.0 / 6 + 4.0 / 7 + 4.0 / 6) / 3));

  // classes absent from both prediction and gt are excluded from the mean
  IoUReport r3 = compute_miou(gt, gt, 5);
  CHECK(r3.miou == doctest::Approx(1.0));
  CHECK_FALSE(r3.class_valid[4]);

  // out-of-range prediction is an error; negative gt is ignored
  std::vector<int64_t> bad = {0, 0, 9, 1};
  CHECK_THROWS(compute_miou(bad, gt, 2));
}
