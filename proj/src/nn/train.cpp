#include "dsae/nn/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include "dsae/nn/batch.hpp"

namespace dsae::nn {

void TrainConfig::validate() const {
  if (!(adam.lr > 0.0)) fail(ErrorKind::InvalidArgument, "learning rate must be positive");
  if (batch < 1) fail(ErrorKind::InvalidArgument, "batch size must be positive");
  if (epochs < 1) fail(ErrorKind::InvalidArgument, "epochs must be positive");
  if (!(val_fraction > 0.0 && val_fraction < 1.0))
    fail(ErrorKind::InvalidArgument, "val_fraction must lie in (0, 1)");
}

namespace {

void split_dataset(const std::vector<SliceSample>& data, const TrainConfig& cfg, std::mt19937_64& rng,
                   std::vector<std::size_t>& train_idx, std::vector<std::size_t>& val_idx) {
  std::set<int> subject_set;
  for (const auto& s : data) subject_set.insert(s.subject);
  if (cfg.split == SplitMode::by_subject && subject_set.size() >= 2) {
    std::vector<int> subjects(subject_set.begin(), subject_set.end());
    std::shuffle(subjects.begin(), subjects.end(), rng);
    const std::size_t n_val = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::lround(cfg.val_fraction * subjects.size())), 1, subjects.size() - 1);
    const std::set<int> val(subjects.begin(), subjects.begin() + static_cast<std::ptrdiff_t>(n_val));
    for (std::size_t i = 0; i < data.size(); ++i) (val.count(data[i].subject) ? val_idx : train_idx).push_back(i);
    return;
  }
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  const std::size_t n_val = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::lround(cfg.val_fraction * data.size())), 1, data.size() - 1);
  val_idx.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
  train_idx.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  std::sort(val_idx.begin(), val_idx.end());
  std::sort(train_idx.begin(), train_idx.end());
}

double evaluate(Autoencoder<float>& model, const std::vector<SliceSample>& data,
                const std::vector<std::size_t>& idx, int batch) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t start = 0; start < idx.size(); start += static_cast<std::size_t>(batch)) {
    std::vector<const SliceImage*> items;
    for (std::size_t k = start; k < std::min(idx.size(), start + static_cast<std::size_t>(batch)); ++k)
      items.push_back(&data[idx[k]].image);
    const Tensor<float> x = to_tensor<float>(items);
    const Tensor<float> y = model.forward(x, Mode::eval);
    sum += mse_loss(y, x) * static_cast<double>(x.size());
    count += x.size();
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

}  // namespace

TrainResult train(const std::vector<SliceSample>& data, const TrainConfig& cfg, const ModelConfig& model_cfg) {
  cfg.validate();
  model_cfg.validate();
  if (data.size() < static_cast<std::size_t>(cfg.batch) || data.size() < 2)
    fail(ErrorKind::InsufficientData, "dataset of " + std::to_string(data.size()) +
                                          " slices is smaller than one batch of " + std::to_string(cfg.batch));
  for (const auto& s : data)
    if (s.image.channels != model_cfg.input_channels || s.image.width != model_cfg.input_size ||
        s.image.height != model_cfg.input_size)
      fail(ErrorKind::Shape, "training slice shape does not match the model configuration");

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> train_idx, val_idx;
  split_dataset(data, cfg, rng, train_idx, val_idx);

  Autoencoder<float> model(model_cfg);
  const auto params = model.params();
  AdamState<float> adam;
  long step = 0;

  TrainResult result;
  result.train_count = train_idx.size();
  result.val_count = val_idx.size();
  double best = std::numeric_limits<double>::infinity();

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), rng);
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t start = 0; start < train_idx.size(); start += static_cast<std::size_t>(cfg.batch)) {
      std::vector<const SliceImage*> items;
      for (std::size_t k = start; k < std::min(train_idx.size(), start + static_cast<std::size_t>(cfg.batch)); ++k)
        items.push_back(&data[train_idx[k]].image);
      const Tensor<float> x = to_tensor<float>(items);
      const auto lg = loss_and_grads(model, x);
      adam_step(params, adam, ++step, cfg.adam);
      sum += lg.mse * static_cast<double>(x.size());
      count += x.size();
    }
    EpochLog log{epoch, sum / static_cast<double>(count), evaluate(model, data, val_idx, cfg.batch)};
    result.history.push_back(log);
    if (log.val_mse < best) {
      best = log.val_mse;
      result.best_epoch = epoch;
      result.best = model.export_params();
    }
    if (cfg.on_epoch) cfg.on_epoch(log);
  }
  return result;
}

void write_loss_csv(const std::vector<EpochLog>& history, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << "epoch,train_mse,val_mse\n" << std::setprecision(9);
  for (const auto& e : history) out << e.epoch << ',' << e.train_mse << ',' << e.val_mse << '\n';
}

SliceImage prepare_slice(const SliceImage& raw, int input_size, Normalization norm) {
  const SliceImage n = norm == Normalization::per_channel ? normalize_slice(raw) : normalize_slice_joint(raw);
  return center_fit(n, input_size, input_size);
}

namespace {

bool keep_slice(const Volume4D* mask, int z, double min_fraction) {
  if (!mask) return true;
  std::size_t inside = 0;
  for (int y = 0; y < mask->ny(); ++y)
    for (int x = 0; x < mask->nx(); ++x)
      if (mask->at(x, y, z) > 0.0) ++inside;
  const double frac = static_cast<double>(inside) / (static_cast<double>(mask->nx()) * mask->ny());
  return frac >= min_fraction;
}

void check_mask(const Volume4D& v, const Volume4D* mask) {
  if (mask && (mask->nx() != v.nx() || mask->ny() != v.ny() || mask->nz() != v.nz()))
    fail(ErrorKind::Shape, "mask grid does not match volume");
}

}  // namespace

std::vector<SliceSample> slices_per_volume(const Volume4D& v, const Volume4D* mask, const DatasetOptions& opts) {
  check_mask(v, mask);
  std::vector<SliceSample> out;
  for (int vol = 0; vol < v.nv(); ++vol)
    for (int z = 0; z < v.nz(); ++z) {
      if (!keep_slice(mask, z, opts.min_mask_fraction)) continue;
      out.push_back({prepare_slice(v.slice(z, {vol}), opts.input_size, opts.normalization), opts.subject});
    }
  return out;
}

std::vector<SliceSample> slices_multichannel(const Volume4D& v, const Volume4D* mask, const DatasetOptions& opts) {
  check_mask(v, mask);
  std::vector<SliceSample> out;
  for (int z = 0; z < v.nz(); ++z) {
    if (!keep_slice(mask, z, opts.min_mask_fraction)) continue;
    out.push_back({prepare_slice(v.slice(z), opts.input_size, opts.normalization), opts.subject});
  }
  return out;
}

std::vector<SliceSample> averaged_slices(const Volume4D& shell, const Volume4D* mask, int n_avg,
                                         int samples_per_slice, std::uint64_t seed, const DatasetOptions& opts) {
  check_mask(shell, mask);
  if (n_avg < 1 || n_avg > shell.nv())
    fail(ErrorKind::InvalidArgument, "cannot average " + std::to_string(n_avg) + " of " +
                                         std::to_string(shell.nv()) + " volumes");
  if (samples_per_slice < 1) fail(ErrorKind::InvalidArgument, "samples_per_slice must be positive");
  std::mt19937_64 rng(seed);
  std::vector<int> order(shell.nv());
  std::vector<SliceSample> out;
  for (int z = 0; z < shell.nz(); ++z) {
    if (!keep_slice(mask, z, opts.min_mask_fraction)) continue;
    for (int r = 0; r < samples_per_slice; ++r) {
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      SliceImage avg(shell.nx(), shell.ny(), 1);
      for (int k = 0; k < n_avg; ++k) {
        const SliceImage s = shell.slice(z, {order[k]});
        for (std::size_t i = 0; i < avg.data.size(); ++i) avg.data[i] += s.data[i];
      }
      for (double& x : avg.data) x /= n_avg;
      out.push_back({prepare_slice(avg, opts.input_size, opts.normalization), opts.subject});
    }
  }
  return out;
}

}  // namespace dsae::nn
