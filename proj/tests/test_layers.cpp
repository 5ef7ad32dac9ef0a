#include "dsae/nn/layers.hpp"
#include "gradcheck.hpp"
#include "test_util.hpp"

using namespace dsae;
using namespace dsae::nn;

namespace {

constexpr double kTol = 1e-4;

void expect_pass(const gradcheck::Report& r) {
  INFO(r.worst_where);
  CHECK(r.checked > 0);
  CHECK(r.worst < kTol);
}

}  // namespace

TEST_CASE("conv2d gradients") {
  std::mt19937_64 rng(1);
  for (int k : {3, 1}) {
    Conv2d<double> conv(3, 4, k, "c");
    conv.init_he_uniform(rng);
    expect_pass(gradcheck::check_layer(conv, gradcheck::random_tensor(2, 3, 5, 6, rng), Mode::train, 10 + k));
  }
}

TEST_CASE("transposed conv gradients and output size") {
  std::mt19937_64 rng(2);
  ConvTranspose2d<double> conv(3, 2, "t");
  conv.init_he_uniform(rng);
  const auto x = gradcheck::random_tensor(2, 3, 4, 3, rng);
  const auto y = conv.forward(x, Mode::train);
  CHECK(y.h == 8);
  CHECK(y.w == 6);
  CHECK(y.c == 2);
  expect_pass(gradcheck::check_layer(conv, x, Mode::train, 20));
}

TEST_CASE("batch norm gradients in train and eval mode") {
  std::mt19937_64 rng(3);
  BatchNorm2d<double> bn(3, 0.99, 1e-3, "bn");
  for (auto* p : bn.params())
    for (double& v : p->value) v += 0.3;
  expect_pass(gradcheck::check_layer(bn, gradcheck::random_tensor(3, 3, 4, 4, rng, -2.0, 3.0), Mode::train, 30));
  expect_pass(gradcheck::check_layer(bn, gradcheck::random_tensor(2, 3, 4, 4, rng), Mode::eval, 31));
}

TEST_CASE("activation, pooling and upsampling gradients") {
  std::mt19937_64 rng(4);
  Elu<double> elu;
  Sigmoid<double> sig;
  AvgPool2<double> pool;
  Upsample2<double> up;
  // Keep ELU probes away from its kink at 0 so central differences stay smooth.
  auto x = gradcheck::random_tensor(2, 2, 4, 4, rng, -2.0, 2.0);
  for (double& v : x.data)
    if (std::abs(v) < 0.01) v += 0.05;
  expect_pass(gradcheck::check_layer(elu, x, Mode::train, 40));
  expect_pass(gradcheck::check_layer(sig, gradcheck::random_tensor(2, 2, 4, 4, rng, -4.0, 4.0), Mode::train, 41));
  expect_pass(gradcheck::check_layer(pool, gradcheck::random_tensor(2, 2, 4, 6, rng), Mode::train, 42));
  expect_pass(gradcheck::check_layer(up, gradcheck::random_tensor(2, 2, 3, 2, rng), Mode::train, 43));
}

TEST_CASE("average pooling backward spreads a quarter of the gradient") {
  AvgPool2<double> pool;
  Tensor<double> x(1, 1, 2, 2, 0.0);
  pool.forward(x, Mode::train);
  Tensor<double> g(1, 1, 1, 1, 8.0);
  const auto gx = pool.backward(g);
  for (double v : gx.data) CHECK(v == 2.0);

  Upsample2<double> up;
  const auto y = up.forward(Tensor<double>(1, 1, 1, 1, 3.0), Mode::train);
  for (double v : y.data) CHECK(v == 3.0);
  CHECK(up.backward(Tensor<double>(1, 1, 2, 2, 1.5)).data[0] == 6.0);
}

TEST_CASE("sigmoid output stays strictly inside (0, 1)") {
  Sigmoid<float> sig;
  Tensor<float> x(1, 1, 1, 4);
  x.data = {-1e6f, -50.0f, 50.0f, 1e6f};
  for (float v : sig.forward(x, Mode::eval).data) CHECK((v > 0.0f && v < 1.0f));
}

TEST_CASE("batch norm running statistics and eval determinism") {
  std::mt19937_64 rng(5);
  BatchNorm2d<double> bn(2, 0.9, 1e-3, "bn");
  const auto x = gradcheck::random_tensor(4, 2, 3, 3, rng, 1.0, 3.0);
  bn.forward(x, Mode::train);
  double mean0 = 0.0;
  for (int n = 0; n < 4; ++n)
    for (int i = 0; i < 9; ++i) mean0 += x.data[n * 18 + i] / 36.0;
  CHECK(bn.buffers()[0]->value[0] == doctest::Approx(0.1 * mean0).epsilon(1e-12));
  const auto a = bn.forward(x, Mode::eval);
  const auto b = bn.forward(x, Mode::eval);
  CHECK(a.data == b.data);
}
