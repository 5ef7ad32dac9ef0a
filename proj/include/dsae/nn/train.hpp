#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "dsae/nn/adam.hpp"
#include "dsae/nn/model.hpp"
#include "dsae/volume.hpp"

namespace dsae::nn {

/// One normalized training slice and the subject it came from.
struct SliceSample {
  SliceImage image;
  int subject = 0;
};

enum class SplitMode { by_subject, by_slice };

struct EpochLog {
  int epoch = 0;
  double train_mse = 0.0;
  double val_mse = 0.0;
};

struct TrainConfig {
  AdamConfig adam;
  int batch = 32;
  int epochs = 200;
  double val_fraction = 0.15;
  /// by_subject falls back to by_slice when only one subject is present.
  SplitMode split = SplitMode::by_subject;
  std::uint64_t seed = 0;
  std::function<void(const EpochLog&)> on_epoch;

  void validate() const;
};

struct TrainResult {
  ModelParams best;  // parameters at the epoch with minimal validation MSE
  int best_epoch = 0;
  std::vector<EpochLog> history;
  std::size_t train_count = 0;
  std::size_t val_count = 0;
};

TrainResult train(const std::vector<SliceSample>& dataset, const TrainConfig& cfg, const ModelConfig& model_cfg);

/// CSV with header "epoch,train_mse,val_mse".
void write_loss_csv(const std::vector<EpochLog>& history, const std::filesystem::path& path);

struct DatasetOptions {
  int input_size = 128;
  Normalization normalization = Normalization::per_channel;
  /// Slices whose in-mask fraction is below this are skipped (needs a mask).
  double min_mask_fraction = 0.01;
  int subject = 0;
};

/// Normalizes a slice the way the model expects and fits it to the model grid.
SliceImage prepare_slice(const SliceImage& raw, int input_size, Normalization norm);

/// One single-channel sample per (volume, slice).
std::vector<SliceSample> slices_per_volume(const Volume4D& v, const Volume4D* mask, const DatasetOptions& opts);
/// One sample per slice carrying every volume as a channel (SH stacks).
std::vector<SliceSample> slices_multichannel(const Volume4D& v, const Volume4D* mask, const DatasetOptions& opts);
/// Per slice, `samples_per_slice` single-channel samples, each the mean of
/// `n_avg` distinct randomly chosen volumes of the shell.
std::vector<SliceSample> averaged_slices(const Volume4D& shell, const Volume4D* mask, int n_avg,
                                         int samples_per_slice, std::uint64_t seed, const DatasetOptions& opts);

}  // namespace dsae::nn
