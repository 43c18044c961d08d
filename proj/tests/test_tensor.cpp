#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "hgseg/nn.hpp"
#include "hgseg/tensor.hpp"
#include "helpers.hpp"

using namespace hgseg;
using namespace hgseg::test;

TEST_CASE("matmul basics") {
  Tensor I = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  Tensor B = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor r = matmul(I, B);
  for (size_t i = 0; i < 6; ++i) CHECK(r.at(i) == B.at(i));

  Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  Tensor v = Tensor::from_data({2, 1}, {1, 1});
  Tensor p = matmul(a, v);
  CHECK(p.at(0) == doctest::Approx(3));
  CHECK(p.at(1) == doctest::Approx(7));

  CHECK_THROWS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})));
}

TEST_CASE("matmul gradient vs finite differences") {
  Rng rng(11);
  Tensor a = random_tensor({5, 4}, rng);
  Tensor b = random_tensor({4, 3}, rng);
  double err = max_grad_rel_err([&] { return sum_all(matmul(a, b)); }, {a, b});
  CHECK(err < 1e-6);
}

TEST_CASE("softmax values") {
  Tensor u = softmax(Tensor::from_data({3}, {0, 0, 0}), 0);
  for (size_t i = 0; i < 3; ++i) CHECK(u.at(i) == doctest::Approx(1.0 / 3));

  real ninf = -std::numeric_limits<real>::infinity();
  Tensor m = softmax(Tensor::from_data({2}, {ninf, 0}), 0);
  CHECK(m.at(0) == 0.0);
  CHECK(m.at(1) == doctest::Approx(1.0));

  Tensor s = softmax(Tensor::from_data({3}, {1, 2, 3}), 0);
  CHECK(s.at(0) == doctest::Approx(0.09003).epsilon(1e-4));
  CHECK(s.at(1) == doctest::Approx(0.24473).epsilon(1e-4));
  CHECK(s.at(2) == doctest::Approx(0.66524).epsilon(1e-4));

  CHECK_THROWS(softmax(Tensor::from_data({2}, {ninf, ninf}), 0));
}

TEST_CASE("softmax is row-stochastic and differentiable") {
  Rng rng(5);
  Tensor x = random_tensor({4, 6}, rng, true, -3, 3);
  Tensor y = softmax(x, 1);
  for (size_t r = 0; r < 4; ++r) {
    double s = 0;
    for (size_t c = 0; c < 6; ++c) {
      CHECK(y.at(r * 6 + c) >= 0);
      s += double(y.at(r * 6 + c));
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
  }
  Tensor w = random_tensor({4, 6}, rng, false);
  auto loss = [&] { return sum_all(mul(softmax(x, 1), w)); };
  CHECK(max_grad_rel_err(loss, {x}) < 1e-5);
  auto loss0 = [&] { return sum_all(mul(softmax(x, 0), w)); };
  CHECK(max_grad_rel_err(loss0, {x}) < 1e-5);
}

TEST_CASE("cosine similarity anchors") {
  Tensor x = Tensor::from_data({3}, {1, 2, 3});
  CHECK(cosine_similarity(x, x, real(0.1)).item() == doctest::Approx(10.0));
  Tensor e1 = Tensor::from_data({2}, {1, 0});
  Tensor e2 = Tensor::from_data({2}, {0, 1});
  CHECK(cosine_similarity(e1, e2, real(1)).item() == doctest::Approx(0.0));
  Tensor d = Tensor::from_data({2}, {1, 1});
  CHECK(cosine_similarity(e1, d, real(1)).item() ==
        doctest::Approx(0.70711).epsilon(1e-4));

  Rng rng(3);
  Tensor a = random_tensor({5}, rng);
  Tensor b = random_tensor({5}, rng);
  auto loss = [&] { return cosine_similarity(a, b, real(0.1)); };
  CHECK(max_grad_rel_err(loss, {a, b}) < 1e-5);
}

TEST_CASE("elementwise op gradients") {
  Rng rng(7);
  Tensor a = random_tensor({3, 4}, rng, true, real(0.2), real(2));  // positive
  Tensor b = random_tensor({3, 4}, rng, true, real(0.3), real(2));
  Tensor w = random_tensor({3, 4}, rng, false);
  auto check = [&](std::function<Tensor()> f, double tol = 1e-5) {
    CHECK(max_grad_rel_err([&] { return sum_all(mul(f(), w)); }, {a, b}) < tol);
  };
  check([&] { return add(a, b); });
  check([&] { return sub(a, b); });
  check([&] { return mul(a, b); });
  check([&] { return divide(a, b); });
  check([&] { return neg(a); });
  check([&] { return scale(a, real(2.5)); });
  check([&] { return add_scalar(a, real(-0.7)); });
  check([&] { return exp_t(a); });
  check([&] { return log_t(a); });
  check([&] { return sqrt_t(a); });
  check([&] { return sigmoid(a); });
  check([&] { return softplus(a); });
  check([&] { return relu(add_scalar(a, real(-1))); });  // inputs off zero
  check([&] { return clamp_min(a, real(0.9)); });
}

TEST_CASE("elementwise values and domain errors") {
  CHECK(sigmoid(Tensor::from_data({1}, {0})).item() == doctest::Approx(0.5));
  CHECK_THROWS(log_t(Tensor::from_data({1}, {-1})));
  CHECK_THROWS(sqrt_t(Tensor::from_data({1}, {-1})));
}

TEST_CASE("structure op gradients") {
  Rng rng(13);
  Tensor a = random_tensor({4, 5}, rng);
  Tensor b = random_tensor({4, 5}, rng);
  Tensor v5 = random_tensor({5}, rng);
  Tensor v4 = random_tensor({4}, rng, true, real(0.5), real(2));
  Tensor w45 = random_tensor({4, 5}, rng, false);
  Tensor w54 = random_tensor({5, 4}, rng, false);
  Tensor w4 = random_tensor({4}, rng, false);
  Tensor w5 = random_tensor({5}, rng, false);

  auto err = [&](std::function<Tensor()> f, std::vector<Tensor> in) {
    return max_grad_rel_err(std::move(f), std::move(in));
  };
  CHECK(err([&] { return sum_all(mul(transpose(a), w54)); }, {a}) < 1e-5);
  CHECK(err([&] { return sum_all(mul(reshape(a, {5, 4}), w54)); }, {a}) < 1e-5);
  CHECK(err([&] { return sum_all(mul(concat_cols({a, b}),
                                     concat_cols({w45, w45}))); },
            {a, b}) < 1e-5);
  CHECK(err([&] { return sum_all(slice_cols(a, 1, 3)); }, {a}) < 1e-5);
  CHECK(err([&] { return sum_all(mul(concat_rows({a, b}),
                                     concat_rows({w45, w45}))); },
            {a, b}) < 1e-5);
  CHECK(err([&] { return mean_all(a); }, {a}) < 1e-5);
  CHECK(err([&] { return sum_all(mul(row_sum(a), w4)); }, {a}) < 1e-5);
  CHECK(err([&] { return sum_all(mul(row_mean(a), w4)); }, {a}) < 1e-5);
  CHECK(err([&] { return sum_all(mul(col_sum(a), w5)); }, {a}) < 1e-5);
  CHECK(err([&] { return sum_all(mul(add_rowvec(a, v5), w45)); }, {a, v5}) < 1e-5);
  CHECK(err([&] { return sum_all(mul(mul_rowvec(a, v5), w45)); }, {a, v5}) < 1e-5);
  CHECK(err([&] { return sum_all(mul(mul_colvec(a, v4), w45)); }, {a, v4}) < 1e-5);
  CHECK(err([&] { return sum_all(mul(div_colvec(a, v4), w45)); }, {a, v4}) < 1e-5);
  CHECK(err([&] { return sum_all(mul(sub_colvec(a, v4), w45)); }, {a, v4}) < 1e-5);

  std::vector<int64_t> gi = {2, 0, 2, 3};
  CHECK(err([&] { return sum_all(mul(gather_rows(a, gi), w45)); }, {a}) < 1e-5);
  std::vector<int64_t> si = {1, 1, 0, 4};
  Tensor w55 = random_tensor({5, 5}, rng, false);
  CHECK(err([&] { return sum_all(mul(scatter_add_rows(a, si, 5), w55)); },
            {a}) < 1e-5);
  std::vector<int64_t> pi = {0, 3, 1, 4};
  CHECK(err([&] { return sum_all(mul(select_per_row(a, pi), w4)); }, {a}) < 1e-5);
}

TEST_CASE("layer norm and linear") {
  Rng rng(17);
  Tensor g = Tensor::from_data({4}, {1, 1, 1, 1}, true);
  Tensor be = Tensor::zeros({4}, true);
  Tensor c = Tensor::from_data({2, 4}, {3, 3, 3, 3, -1, -1, -1, -1}, true);
  Tensor ln = layer_norm(c, g, be);
  for (size_t i = 0; i < 8; ++i) CHECK(std::abs(double(ln.at(i))) < 1e-9);

  Tensor x = random_tensor({3, 4}, rng);
  Tensor gg = random_tensor({4}, rng, true, real(0.5), real(1.5));
  Tensor bb = random_tensor({4}, rng);
  Tensor w = random_tensor({3, 4}, rng, false);
  auto lnloss = [&] { return sum_all(mul(layer_norm(x, gg, bb), w)); };
  CHECK(max_grad_rel_err(lnloss, {x, gg, bb}) < 1e-5);

  Tensor W = random_tensor({4, 2}, rng);
  Tensor b2 = random_tensor({2}, rng);
  Tensor w2 = random_tensor({3, 2}, rng, false);
  auto liloss = [&] { return sum_all(mul(linear(x, W, b2), w2)); };
  CHECK(max_grad_rel_err(liloss, {x, W, b2}) < 1e-5);
}

TEST_CASE("backward linearity") {
  Rng rng(23);
  Tensor x = random_tensor({3, 3}, rng);
  auto l1 = [&] { return sum_all(mul(x, x)); };
  auto l2 = [&] { return sum_all(exp_t(x)); };
  x.zero_grad();
  l1().backward();
  auto g1 = x.grad();
  x.zero_grad();
  l2().backward();
  auto g2 = x.grad();
  x.zero_grad();
  add(scale(l1(), real(2)), scale(l2(), real(-3))).backward();
  for (size_t i = 0; i < x.numel(); ++i)
    CHECK(std::abs(double(x.grad()[i] - (2 * g1[i] - 3 * g2[i]))) < 1e-9);
}

TEST_CASE("backward determinism is bitwise") {
  Rng rng(29);
  Tensor x = random_tensor({6, 6}, rng);
  Tensor y = random_tensor({6, 6}, rng);
  auto loss = [&] {
    Tensor z = matmul(softmax(x, 1), transpose(y));
    return sum_all(mul(z, sigmoid(z)));
  };
  x.zero_grad();
  y.zero_grad();
  loss().backward();
  auto gx = x.grad(), gy = y.grad();
  x.zero_grad();
  y.zero_grad();
  loss().backward();
  for (size_t i = 0; i < gx.size(); ++i) CHECK(x.grad()[i] == gx[i]);
  for (size_t i = 0; i < gy.size(); ++i) CHECK(y.grad()[i] == gy[i]);
}

TEST_CASE("tensor file round trip") {
  Rng rng(31);
  Tensor t = random_tensor({3, 2, 4}, rng, false);
  auto path = (std::filesystem::temp_directory_path() / "hgt_rt.bin").string();
  save_tensor(path, t);
  Tensor u = load_tensor(path);
  CHECK(u.shape() == t.shape());
  for (size_t i = 0; i < t.numel(); ++i) CHECK(u.at(i) == t.at(i));
  std::remove(path.c_str());
}

TEST_CASE("no-grad guard suppresses graph recording") {
  Tensor x = Tensor::from_data({2}, {1, 2}, true);
  NoGradGuard ng;
  Tensor y = mul(x, x);
  CHECK_FALSE(y.requires_grad());
}
