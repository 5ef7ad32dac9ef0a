#include <fstream>

#include "dsae/nn/adam.hpp"
#include "dsae/nn/train.hpp"
#include "dsae/phantom.hpp"
#include "test_util.hpp"

using namespace dsae;
using namespace dsae::nn;

namespace {

ModelConfig tiny(int size = 16) {
  ModelConfig c;
  c.input_size = size;
  c.latent_maps = 4;
  c.width_divisor = 8;
  c.seed = 5;
  return c;
}

std::vector<SliceSample> phantom_slices(int count, int size) {
  PhantomSpec spec;
  spec.dims = {size, size, count + 2};
  spec.n_directions = 12;
  const Phantom p = make_phantom(spec);
  DatasetOptions opts;
  opts.input_size = size;
  std::vector<SliceSample> out;
  for (int z = 1; z <= count; ++z) out.push_back({prepare_slice(p.dwi.slice(z, {0}), size, opts.normalization), 0});
  return out;
}

}  // namespace

TEST_CASE("adam first step and zero gradients") {
  Param<double> p("w", {3}, 1.0);
  std::fill(p.grad.begin(), p.grad.end(), 1.0);
  AdamState<double> st;
  AdamConfig cfg;
  adam_step<double>({&p}, st, 1, cfg);
  for (double v : p.value) CHECK(1.0 - v == doctest::Approx(5e-5 / (1.0 + 1e-7)).epsilon(1e-9));
  CHECK(st.m[0][0] == doctest::Approx(0.1));
  CHECK(st.v[0][0] == doctest::Approx(0.001));

  const Buffer<double> before = p.value;
  const double m0 = st.m[0][0], v0 = st.v[0][0];
  std::fill(p.grad.begin(), p.grad.end(), 0.0);
  Param<double> fresh("f", {2}, 0.5);
  AdamState<double> fs;
  adam_step<double>({&fresh}, fs, 1, cfg);
  CHECK(fresh.value == Buffer<double>{0.5, 0.5});
  adam_step<double>({&p}, st, 2, cfg);
  CHECK(st.m[0][0] == doctest::Approx(0.9 * m0).epsilon(1e-12));
  CHECK(st.v[0][0] == doctest::Approx(0.999 * v0).epsilon(1e-12));
  CHECK(p.value != before);
}

TEST_CASE("training is deterministic and keeps the best validation epoch") {
  const auto data = phantom_slices(12, 16);
  TrainConfig tc;
  tc.batch = 4;
  tc.epochs = 6;
  tc.adam.lr = 1e-3;
  tc.seed = 3;
  const auto a = train(data, tc, tiny());
  const auto b = train(data, tc, tiny());
  REQUIRE(a.history.size() == 6);
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].train_mse == b.history[i].train_mse);
    CHECK(a.history[i].val_mse == b.history[i].val_mse);
  }
  CHECK(a.best == b.best);
  CHECK(a.val_count == 2);
  CHECK(a.train_count == 10);
  const double best_val = a.history[a.best_epoch - 1].val_mse;
  for (const auto& e : a.history) CHECK(best_val <= e.val_mse);
  CHECK(best_val <= a.history.back().val_mse);
  CHECK(a.history.back().train_mse < a.history.front().train_mse);
}

TEST_CASE("subject split keeps subjects apart") {
  auto data = phantom_slices(12, 16);
  for (std::size_t i = 0; i < data.size(); ++i) data[i].subject = static_cast<int>(i % 6);
  TrainConfig tc;
  tc.batch = 2;
  tc.epochs = 1;
  const auto r = train(data, tc, tiny());
  CHECK(r.val_count == 2);
  CHECK(r.train_count == 10);
}

TEST_CASE("datasets smaller than a batch are rejected") {
  const auto data = phantom_slices(5, 16);
  TrainConfig tc;
  tc.batch = 32;
  CHECK_ERROR_KIND(train(data, tc, tiny()), ErrorKind::InsufficientData);
  tc.batch = 4;
  CHECK_ERROR_KIND(train(data, tc, tiny(32)), ErrorKind::Shape);
}

TEST_CASE("averaged dataset draws distinct volumes") {
  // Volume v lights up pixel v only, so an average of n distinct volumes has
  // exactly n nonzero pixels.
  Volume4D shell({5, 4, 3, 20}, {1, 1, 1});
  for (int v = 0; v < 20; ++v)
    for (int z = 0; z < 3; ++z) shell.at(v % 5, v / 5, z, v) = 1.0;
  DatasetOptions opts;
  opts.input_size = 16;
  const auto s = averaged_slices(shell, nullptr, 15, 2, 9, opts);
  CHECK(s.size() == 6);
  for (const auto& sample : s) {
    CHECK(sample.image.width == 16);
    CHECK(sample.image.channels == 1);
    int lit = 0;
    for (double x : sample.image.data) lit += x == 1.0;
    CHECK(lit == 15);
  }
  CHECK(s[0].image.data != s[1].image.data);
  CHECK(averaged_slices(shell, nullptr, 20, 1, 9, opts).size() == 3);
  CHECK_ERROR_KIND(averaged_slices(shell, nullptr, 21, 1, 9, opts), ErrorKind::InvalidArgument);

  Volume4D mask({5, 4, 3, 1}, {1, 1, 1}, Intent::labels);
  mask.at(1, 1, 2) = 1;
  opts.min_mask_fraction = 0.05;
  CHECK(averaged_slices(shell, &mask, 15, 2, 9, opts).size() == 2);
  CHECK(slices_per_volume(shell, &mask, opts).size() == 20);
  CHECK(slices_multichannel(shell, &mask, opts).size() == 1);
}

TEST_CASE("loss log format") {
  const auto dir = test::temp_dir("losslog");
  write_loss_csv({{1, 0.5, 0.25}, {2, 0.125, 0.0625}}, dir / "loss.csv");
  std::ifstream f(dir / "loss.csv");
  std::string line;
  std::getline(f, line);
  CHECK(line == "epoch,train_mse,val_mse");
  std::getline(f, line);
  CHECK(line == "1,0.5,0.25");
}
