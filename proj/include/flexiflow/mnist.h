//
// SPDX-License-Identifier: Apache-2.0
//

#ifndef FLEXIFLOW_MNIST_H_
#define FLEXIFLOW_MNIST_H_

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "flexiflow/rng.h"

namespace flexiflow::mnist {

class MnistError: public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// IDX image file (optionally gzipped) as N x 1 x H x W floats in [0, 1].
torch::Tensor read_idx_images(const std::filesystem::path &path, int limit = -1);
/// IDX label file (optionally gzipped) as N int64.
torch::Tensor read_idx_labels(const std::filesystem::path &path, int limit = -1);

/// Zero-pads N x C x H x W images to `size` x `size`, centered.
torch::Tensor pad_to(const torch::Tensor &images, int size);

struct ColoredDigit {
  torch::Tensor x_g;  // 1 x H x W
  torch::Tensor x_c;  // 3 x H x W
  torch::Tensor y;    // 3 x H x W, x_g - x_c
  int base_channel = 0;
};

/// Base color uniform over {R, G, B} plus N(0, noise_std^2) per channel,
/// clipped to [0, 1]; x_c = color * x_g.
ColoredDigit colorize(const torch::Tensor &x_g, Rng &rng, double noise_std = 0.05);

/// Batched colorize over N x 1 x H x W: returns (x_g, y) stacks.
std::pair<torch::Tensor, torch::Tensor> colorize_batch(const torch::Tensor &x_g,
                                                       Rng &rng,
                                                       double noise_std = 0.05);

enum class HeadScale {
  /// Head weights drawn at 0.001 times their default scale.
  kInit,
  /// Head outputs multiplied by 0.001.
  kOutput,
};

struct UNetConfig {
  int depth = 3;
  int base_width = 16;
  int time_embed_dim = 32;
  HeadScale head_scale = HeadScale::kInit;
};

class ResBlockImpl: public torch::nn::Module {
public:
  ResBlockImpl(int in, int out, int temb);
  torch::Tensor forward(const torch::Tensor &x, const torch::Tensor &temb);

  torch::nn::GroupNorm norm1{ nullptr }, norm2{ nullptr };
  torch::nn::Conv2d conv1{ nullptr }, conv2{ nullptr }, skip{ nullptr };
  torch::nn::Linear time{ nullptr };
};
TORCH_MODULE(ResBlock);

/// Grayscale and color U-Nets. The color path reads grayscale bottleneck and
/// skip features; the grayscale path never reads color features.
class DualUNetImpl: public torch::nn::Module {
public:
  explicit DualUNetImpl(const UNetConfig &cfg);

  /// (s_g: B x 1 x H x W, s_y: B x 3 x H x W). t is B.
  std::pair<torch::Tensor, torch::Tensor> forward(const torch::Tensor &x_g,
                                                  const torch::Tensor &x_y,
                                                  const torch::Tensor &t);
  /// Grayscale branch alone.
  torch::Tensor forward_gray(const torch::Tensor &x_g, const torch::Tensor &t);

  const UNetConfig &config() const { return cfg_; }

  torch::nn::Sequential time_mlp{ nullptr };
  torch::nn::Conv2d stem_g{ nullptr }, stem_c{ nullptr };
  torch::nn::ModuleList enc_g{ nullptr }, enc_c{ nullptr };
  torch::nn::ModuleList down_g{ nullptr }, down_c{ nullptr };
  ResBlock mid_g{ nullptr }, mid_c{ nullptr };
  torch::nn::ModuleList dec_g{ nullptr }, dec_c{ nullptr };
  torch::nn::Conv2d head_g{ nullptr }, head_c{ nullptr };

private:
  struct GrayPass {
    torch::Tensor out;
    std::vector<torch::Tensor> skips;
    torch::Tensor mid;
  };
  GrayPass gray_pass(const torch::Tensor &x_g, const torch::Tensor &temb);
  torch::Tensor head(torch::nn::Conv2d &conv, const torch::Tensor &x);

  UNetConfig cfg_;
};
TORCH_MODULE(DualUNet);

struct MnistTrainConfig {
  UNetConfig unet;
  int steps = 2000;
  int batch_size = 32;
  double learning_rate = 2e-3;
  std::uint64_t seed = 42;
  double color_noise = 0.05;
  int log_every = 100;
  /// Stop early once this many seconds have elapsed (<= 0: no limit).
  double time_budget_s = 0.0;
};

struct MnistTrainResult {
  std::vector<double> losses;
  double seconds = 0.0;
};

/// Independent Gaussian priors per branch, t ~ U(0, 1), linear paths, MSE
/// of both predictions against the clean endpoints. Images must be padded
/// to a multiple of 2^depth. Colors are drawn afresh for every batch.
MnistTrainResult mnist_train(DualUNet &net, const torch::Tensor &images,
                             const MnistTrainConfig &cfg, std::ostream *log = nullptr);

enum class Reconstruction {
  /// x_c = x_g - y.
  kDifference,
  /// x_c = x_g + (x_g - y).
  kPrinted,
};

struct MnistSample {
  torch::Tensor gray;   // 1 x H x W
  torch::Tensor y;      // 3 x H x W
  torch::Tensor color;  // 3 x H x W, clipped to [0, 1]
};

/// Euler integration of both branches from priors seeded by g_seed and
/// y_seed. Each y seed is one batch member; the grayscale prior is shared.
std::vector<MnistSample> mnist_sample(DualUNet &net, int size, int n_steps,
                                      std::uint64_t g_seed,
                                      const std::vector<std::uint64_t> &y_seeds,
                                      Reconstruction rec = Reconstruction::kDifference);

/// Channel with the largest mean over pixels where the grayscale is above
/// `threshold`.
int dominant_channel(const MnistSample &s, double threshold = 0.3);

/// Tiles 3 x H x W (or 1 x H x W) images into a PNG grid, row-major.
void write_png_grid(const std::filesystem::path &path,
                    const std::vector<torch::Tensor> &images, int columns,
                    int pad = 2);

}  // namespace flexiflow::mnist

#endif  // FLEXIFLOW_MNIST_H_
