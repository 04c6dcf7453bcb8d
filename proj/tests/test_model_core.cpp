#include <doctest.h>

#include <cmath>
#include <random>

#include "vibspk/grad_check.hpp"
#include "vibspk/model.hpp"

using namespace vibspk;

namespace {

EncoderParams identity_encoder(Eigen::Index dim) {
  EncoderParams p;
  p.layers.push_back({Matrix::Identity(dim, dim), Vector::Zero(dim)});
  p.activation = Activation::Linear;
  return p;
}

EncoderParams random_encoder(std::vector<Eigen::Index> dims, Eigen::Index in,
                             unsigned seed) {
  std::mt19937 gen(seed);
  std::normal_distribution<double> dist;
  EncoderParams p;
  for (Eigen::Index d : dims) {
    DenseLayer l{Matrix(d, in), Vector(d)};
    for (Eigen::Index r = 0; r < d; ++r) {
      l.b(r) = 0.1 * dist(gen);
      for (Eigen::Index c = 0; c < in; ++c) l.W(r, c) = dist(gen) / std::sqrt(double(in));
    }
    p.layers.push_back(std::move(l));
    in = d;
  }
  return p;
}

}  // namespace

TEST_CASE("stats pooling matches the hand formula") {
  Matrix h(2, 2);
  h << 1, 2, 3, 4;
  const Vector p = stats_pooling(h);
  CHECK(p(0) == doctest::Approx(2.0));
  CHECK(p(1) == doctest::Approx(3.0));
  CHECK(p(2) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(p(3) == doctest::Approx(1.0).epsilon(1e-9));

  Matrix one_col(2, 1);
  one_col << 0, 2;
  const Vector q = stats_pooling(one_col);
  CHECK(q(0) == doctest::Approx(1.0));
  CHECK(q(1) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("stats pooling clamps zero variance to the floor") {
  Matrix h = Matrix::Constant(5, 3, 1.25);
  const Vector p = stats_pooling(h);
  for (Eigen::Index f = 0; f < 3; ++f) {
    CHECK(p(f) == doctest::Approx(1.25));
    CHECK(p(3 + f) == kStdFloor);
  }
}

TEST_CASE("stats pooling rejects empty input") {
  CHECK_THROWS_AS(stats_pooling(Matrix(0, 3)), std::invalid_argument);
}

TEST_CASE("stats pooling is permutation invariant over frames") {
  std::mt19937 gen(11);
  std::normal_distribution<double> dist;
  for (int rep = 0; rep < 20; ++rep) {
    Matrix h(7, 4);
    for (Eigen::Index t = 0; t < 7; ++t)
      for (Eigen::Index f = 0; f < 4; ++f) h(t, f) = dist(gen);
    Matrix shuffled = h;
    std::vector<int> perm{3, 0, 6, 1, 5, 2, 4};
    for (int t = 0; t < 7; ++t) shuffled.row(t) = h.row(perm[t]);
    CHECK((stats_pooling(h) - stats_pooling(shuffled)).lpNorm<Eigen::Infinity>() <
          1e-12);
  }
}

TEST_CASE("encoder forward through an identity network") {
  EncoderParams p = identity_encoder(2);
  Matrix x(2, 2);
  x << 1, 2, 3, 4;
  const Vector pooled = encoder_forward(x, p);
  CHECK(pooled(0) == doctest::Approx(2.0));
  CHECK(pooled(1) == doctest::Approx(3.0));
  CHECK(pooled(2) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(pooled(3) == doctest::Approx(1.0).epsilon(1e-9));

  Matrix single(1, 2);
  single << 5, 5;
  const Vector s = encoder_forward(single, p);
  CHECK(s(0) == doctest::Approx(5.0));
  CHECK(s(1) == doctest::Approx(5.0));
  CHECK(s(2) == kStdFloor);
  CHECK(s(3) == kStdFloor);
}

TEST_CASE("all-zero weights pool the activated bias") {
  EncoderParams p;
  Vector b(3);
  b << 0.5, -1.0, 0.0;
  p.layers.push_back({Matrix::Zero(3, 2), b});
  p.activation = Activation::Tanh;
  Matrix x = Matrix::Random(6, 2);
  const Vector pooled = encoder_forward(x, p);
  for (Eigen::Index f = 0; f < 3; ++f) {
    CHECK(pooled(f) == doctest::Approx(std::tanh(b(f))));
    CHECK(pooled(3 + f) == kStdFloor);
  }
}

TEST_CASE("encoder forward is deterministic bit-for-bit") {
  EncoderParams p = random_encoder({5, 4}, 3, 42);
  Matrix x = Matrix::Random(9, 3);
  const Vector a = encoder_forward(x, p);
  const Vector b = encoder_forward(x, p);
  CHECK((a.array() == b.array()).all());
}

TEST_CASE("encoder rejects shape mismatches") {
  EncoderParams p = identity_encoder(2);
  CHECK_THROWS_AS(encoder_forward(Matrix::Zero(3, 5), p),
                  std::invalid_argument);
}

TEST_CASE("linear single-layer weight gradient is an outer product") {
  // Single frame and linear activation: pooled mean = W x + b, so the
  // weight gradient of g . mean is g x^T.
  EncoderParams p;
  p.layers.push_back({Matrix::Random(3, 2), Vector::Random(3)});
  p.activation = Activation::Linear;
  Matrix x(1, 2);
  x << 0.7, -1.3;

  EncoderCache cache;
  encoder_forward(x, p, &cache);
  Vector g(6);
  g << 1.0, -2.0, 0.5, 0.0, 0.0, 0.0;  // upstream on the mean half only
  EncoderGrads grads = encoder_zero_grads(p);
  encoder_backward(p, cache, g, grads);
  const Matrix expected = g.head(3) * x.row(0);
  CHECK((grads.layers[0].W - expected).lpNorm<Eigen::Infinity>() < 1e-12);
  CHECK((grads.layers[0].b - g.head(3)).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("zero upstream gradient gives zero parameter gradient") {
  EncoderParams p = random_encoder({4, 3}, 2, 7);
  Matrix x = Matrix::Random(5, 2);
  EncoderCache cache;
  encoder_forward(x, p, &cache);
  EncoderGrads grads = encoder_zero_grads(p);
  encoder_backward(p, cache, Vector::Zero(6), grads);
  for (const auto& l : grads.layers) {
    CHECK(l.W.lpNorm<Eigen::Infinity>() == 0.0);
    CHECK(l.b.lpNorm<Eigen::Infinity>() == 0.0);
  }
}

TEST_CASE("encoder backward matches central finite differences") {
  // Scalar probe f(params) = u . pooled with a fixed random u; oracle is
  // a hand-rolled central difference, independent of encoder_backward.
  const Eigen::Index D = 4, T = 6;
  EncoderParams p = random_encoder({5, 4, 3}, D, 123);
  std::mt19937 gen(5);
  std::normal_distribution<double> dist;
  Matrix x(T, D);
  for (Eigen::Index t = 0; t < T; ++t)
    for (Eigen::Index d = 0; d < D; ++d) x(t, d) = dist(gen);
  Vector u(6);
  for (Eigen::Index i = 0; i < 6; ++i) u(i) = dist(gen);

  EncoderCache cache;
  encoder_forward(x, p, &cache);
  EncoderGrads grads = encoder_zero_grads(p);
  encoder_backward(p, cache, u, grads);

  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t k = 0; k < p.layers.size(); ++k) {
    auto check_entry = [&](double* param, double analytic) {
      const double saved = *param;
      *param = saved + h;
      const double up = u.dot(encoder_forward(x, p));
      *param = saved - h;
      const double down = u.dot(encoder_forward(x, p));
      *param = saved;
      const double numeric = (up - down) / (2 * h);
      worst = std::max(worst, std::abs(analytic - numeric) /
                                  std::max(1.0, std::abs(numeric)));
    };
    for (Eigen::Index r = 0; r < p.layers[k].W.rows(); ++r)
      for (Eigen::Index c = 0; c < p.layers[k].W.cols(); ++c)
        check_entry(&p.layers[k].W(r, c), grads.layers[k].W(r, c));
    for (Eigen::Index r = 0; r < p.layers[k].b.size(); ++r)
      check_entry(&p.layers[k].b(r), grads.layers[k].b(r));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("grad_check on a quadratic closure is nearly exact") {
  Vector w(1);
  w << 3.0;
  Vector analytic(1);
  analytic << 6.0;
  const auto report = grad_check(
      [](const Vector& v) { return v(0) * v(0); }, w, analytic, {{"w", 1}},
      1e-5);
  CHECK(report.blocks.size() == 1);
  CHECK(report.max_rel_err() < 1e-8);
  CHECK(report.passes(1e-4));
}

TEST_CASE("grad_check flags a wrong gradient") {
  Vector w(1);
  w << 3.0;
  Vector wrong(1);
  wrong << 5.0;
  const auto report = grad_check(
      [](const Vector& v) { return v(0) * v(0); }, w, wrong, {{"w", 1}}, 1e-5);
  CHECK_FALSE(report.passes(1e-4));
}

TEST_CASE("grad_check reports the offending block on non-finite loss") {
  Vector w = Vector::Zero(1);
  CHECK_THROWS_WITH_AS(
      grad_check([](const Vector& v) { return std::log(v(0)); }, w,
                 Vector::Zero(1), {{"badblock", 1}}, 1e-5),
      doctest::Contains("badblock"), std::runtime_error);
}

TEST_CASE("CE gradient of the target logit at uniform logits is 1/K - 1") {
  const Eigen::Index K = 8;
  const Vector logits = Vector::Zero(K);
  const Vector g = softmax_ce_gradient(logits, 0);
  CHECK(g(0) == doctest::Approx(1.0 / double(K) - 1.0));
  for (Eigen::Index k = 1; k < K; ++k)
    CHECK(g(k) == doctest::Approx(1.0 / double(K)));
}
