//
// SPDX-License-Identifier: Apache-2.0
//

#include "flexiflow/mnist.h"

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <ostream>

#include <png.h>
#include <zlib.h>

#include <nlohmann/json.hpp>

#include "flexiflow/batch.h"
#include "flexiflow/net.h"
#include "flexiflow/training.h"

namespace flexiflow::mnist {

namespace nn = torch::nn;

namespace {
  /// Whole file through zlib, which passes plain files through unchanged.
  std::vector<unsigned char> read_gz(const std::filesystem::path &path) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (!f)
      throw MnistError("cannot open " + path.string());
    std::vector<unsigned char> data;
    std::array<unsigned char, 1 << 16> buf;
    int got;
    while ((got = gzread(f, buf.data(), buf.size())) > 0)
      data.insert(data.end(), buf.begin(), buf.begin() + got);
    const bool failed = got < 0;
    gzclose(f);
    if (failed)
      throw MnistError("decompression failed for " + path.string());
    return data;
  }

  std::uint32_t be32(const std::vector<unsigned char> &d, std::size_t off) {
    if (off + 4 > d.size())
      throw MnistError("truncated IDX header");
    return (std::uint32_t{ d[off] } << 24) | (std::uint32_t{ d[off + 1] } << 16)
           | (std::uint32_t{ d[off + 2] } << 8) | std::uint32_t{ d[off + 3] };
  }
}  // namespace

torch::Tensor read_idx_images(const std::filesystem::path &path, int limit) {
  const auto d = read_gz(path);
  if (be32(d, 0) != 0x00000803)
    throw MnistError(path.string() + ": not an IDX image file");
  int64_t n = be32(d, 4);
  const int64_t h = be32(d, 8), w = be32(d, 12);
  if (16 + static_cast<std::size_t>(n * h * w) > d.size())
    throw MnistError(path.string() + ": truncated image data");
  if (limit >= 0)
    n = std::min<int64_t>(n, limit);
  auto out = torch::empty({ n, 1, h, w }, torch::kFloat32);
  float *p = out.data_ptr<float>();
  for (int64_t i = 0; i < n * h * w; ++i)
    p[i] = static_cast<float>(d[16 + i]) / 255.0f;
  return out;
}

torch::Tensor read_idx_labels(const std::filesystem::path &path, int limit) {
  const auto d = read_gz(path);
  if (be32(d, 0) != 0x00000801)
    throw MnistError(path.string() + ": not an IDX label file");
  int64_t n = be32(d, 4);
  if (8 + static_cast<std::size_t>(n) > d.size())
    throw MnistError(path.string() + ": truncated label data");
  if (limit >= 0)
    n = std::min<int64_t>(n, limit);
  auto out = torch::empty({ n }, torch::kInt64);
  for (int64_t i = 0; i < n; ++i)
    out[i] = static_cast<int64_t>(d[8 + i]);
  return out;
}

torch::Tensor pad_to(const torch::Tensor &images, int size) {
  const auto h = images.size(-2), w = images.size(-1);
  if (h > size || w > size)
    throw MnistError("pad_to: image larger than target size");
  const auto top = (size - h) / 2, left = (size - w) / 2;
  return torch::constant_pad_nd(images, { left, size - w - left, top, size - h - top });
}

ColoredDigit colorize(const torch::Tensor &x_g, Rng &rng, double noise_std) {
  ColoredDigit r;
  r.base_channel = rng.index(3);
  auto color = torch::zeros({ 3, 1, 1 }, x_g.scalar_type());
  for (int c = 0; c < 3; ++c) {
    const double base = c == r.base_channel ? 1.0 : 0.0;
    color[c] = std::clamp(base + noise_std * rng.normal(), 0.0, 1.0);
  }
  r.x_g = x_g;
  r.x_c = color * x_g;
  r.y = x_g - r.x_c;
  return r;
}

std::pair<torch::Tensor, torch::Tensor> colorize_batch(const torch::Tensor &x_g,
                                                       Rng &rng, double noise_std) {
  std::vector<torch::Tensor> ys;
  for (int64_t i = 0; i < x_g.size(0); ++i)
    ys.push_back(colorize(x_g[i], rng, noise_std).y);
  return { x_g, torch::stack(ys) };
}

// ---------------------------------------------------------------------------

ResBlockImpl::ResBlockImpl(int in, int out, int temb) {
  norm1 = register_module("norm1", nn::GroupNorm(4, in));
  conv1 = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(in, out, 3).padding(1)));
  time = register_module("time", nn::Linear(temb, out));
  norm2 = register_module("norm2", nn::GroupNorm(4, out));
  conv2 = register_module("conv2", nn::Conv2d(nn::Conv2dOptions(out, out, 3).padding(1)));
  if (in != out)
    skip = register_module("skip", nn::Conv2d(nn::Conv2dOptions(in, out, 1)));
}

torch::Tensor ResBlockImpl::forward(const torch::Tensor &x, const torch::Tensor &temb) {
  auto h = conv1(torch::silu(norm1(x)));
  h = h + time(temb).unsqueeze(-1).unsqueeze(-1);
  h = conv2(torch::silu(norm2(h)));
  return h + (skip ? skip(x) : x);
}

DualUNetImpl::DualUNetImpl(const UNetConfig &cfg): cfg_(cfg) {
  if (cfg.depth < 1 || cfg.base_width < 4 || cfg.base_width % 4 != 0)
    throw MnistError("UNet needs depth >= 1 and a base width divisible by 4");
  const int temb = 2 * cfg.time_embed_dim;
  time_mlp = register_module("time_mlp",
                             nn::Sequential(nn::Linear(cfg.time_embed_dim, temb),
                                            nn::SiLU(), nn::Linear(temb, temb)));
  std::vector<int> w;
  for (int l = 0; l < cfg.depth; ++l)
    w.push_back(cfg.base_width << l);

  auto stem = [&](int in) { return nn::Conv2d(nn::Conv2dOptions(in, w[0], 3).padding(1)); };
  stem_g = register_module("stem_g", stem(1));
  stem_c = register_module("stem_c", stem(3));
  enc_g = register_module("enc_g", nn::ModuleList());
  enc_c = register_module("enc_c", nn::ModuleList());
  down_g = register_module("down_g", nn::ModuleList());
  down_c = register_module("down_c", nn::ModuleList());
  dec_g = register_module("dec_g", nn::ModuleList());
  dec_c = register_module("dec_c", nn::ModuleList());
  for (int l = 0; l < cfg.depth; ++l) {
    const int in = l == 0 ? w[0] : w[l - 1];
    enc_g->push_back(ResBlock(in, w[l], temb));
    enc_c->push_back(ResBlock(in, w[l], temb));
    auto down = [&] { return nn::Conv2d(nn::Conv2dOptions(w[l], w[l], 3).stride(2).padding(1)); };
    down_g->push_back(down());
    down_c->push_back(down());
  }
  const int deep = w.back();
  mid_g = register_module("mid_g", ResBlock(deep, deep, temb));
  mid_c = register_module("mid_c", ResBlock(2 * deep, deep, temb));
  for (int l = cfg.depth - 1; l >= 0; --l) {
    const int below = l == cfg.depth - 1 ? deep : w[l + 1];
    dec_g->push_back(ResBlock(below + w[l], w[l], temb));
    dec_c->push_back(ResBlock(below + 2 * w[l], w[l], temb));
  }
  head_g = register_module("head_g", nn::Conv2d(nn::Conv2dOptions(w[0], 1, 1)));
  head_c = register_module("head_c", nn::Conv2d(nn::Conv2dOptions(w[0], 3, 1)));
  if (cfg.head_scale == HeadScale::kInit) {
    torch::NoGradGuard guard;
    for (auto *h: { &head_g, &head_c }) {
      (*h)->weight.mul_(1e-3);
      (*h)->bias.zero_();
    }
  }
}

torch::Tensor DualUNetImpl::head(nn::Conv2d &conv, const torch::Tensor &x) {
  const auto out = conv(torch::silu(x));
  return cfg_.head_scale == HeadScale::kOutput ? out * 1e-3 : out;
}

DualUNetImpl::GrayPass DualUNetImpl::gray_pass(const torch::Tensor &x_g,
                                               const torch::Tensor &temb) {
  GrayPass g;
  auto h = stem_g(x_g);
  for (int l = 0; l < cfg_.depth; ++l) {
    h = enc_g[l]->as<ResBlock>()->forward(h, temb);
    g.skips.push_back(h);
    h = down_g[l]->as<nn::Conv2d>()->forward(h);
  }
  g.mid = mid_g(h, temb);
  auto u = g.mid;
  for (int k = 0; k < cfg_.depth; ++k) {
    const int l = cfg_.depth - 1 - k;
    u = torch::upsample_nearest2d(u, { u.size(2) * 2, u.size(3) * 2 });
    u = dec_g[k]->as<ResBlock>()->forward(torch::cat({ u, g.skips[l] }, 1), temb);
  }
  g.out = head(head_g, u);
  return g;
}

torch::Tensor DualUNetImpl::forward_gray(const torch::Tensor &x_g, const torch::Tensor &t) {
  const auto temb = time_mlp->forward(time_embedding(t, cfg_.time_embed_dim));
  return gray_pass(x_g, temb).out;
}

std::pair<torch::Tensor, torch::Tensor> DualUNetImpl::forward(const torch::Tensor &x_g,
                                                              const torch::Tensor &x_y,
                                                              const torch::Tensor &t) {
  const int64_t div = int64_t{ 1 } << cfg_.depth;
  if (x_g.dim() != 4 || x_y.dim() != 4 || x_g.size(1) != 1 || x_y.size(1) != 3
      || x_g.size(2) != x_y.size(2) || x_g.size(3) != x_y.size(3)
      || x_g.size(2) % div != 0 || x_g.size(3) % div != 0)
    throw MnistError("dual UNet: expected B x 1 x H x W and B x 3 x H x W with H, W "
                     "divisible by 2^depth");
  const auto temb = time_mlp->forward(time_embedding(t, cfg_.time_embed_dim));
  const auto g = gray_pass(x_g, temb);

  auto h = stem_c(x_y);
  std::vector<torch::Tensor> skips;
  for (int l = 0; l < cfg_.depth; ++l) {
    h = enc_c[l]->as<ResBlock>()->forward(h, temb);
    skips.push_back(h);
    h = down_c[l]->as<nn::Conv2d>()->forward(h);
  }
  auto u = mid_c(torch::cat({ h, g.mid }, 1), temb);
  for (int k = 0; k < cfg_.depth; ++k) {
    const int l = cfg_.depth - 1 - k;
    u = torch::upsample_nearest2d(u, { u.size(2) * 2, u.size(3) * 2 });
    u = dec_c[k]->as<ResBlock>()->forward(torch::cat({ u, skips[l], g.skips[l] }, 1), temb);
  }
  return { g.out, head(head_c, u) };
}

// ---------------------------------------------------------------------------

MnistTrainResult mnist_train(DualUNet &net, const torch::Tensor &images,
                             const MnistTrainConfig &cfg, std::ostream *log) {
  const auto start = std::chrono::steady_clock::now();
  const auto dtype = net->stem_g->weight.scalar_type();
  Adam adam(net->parameters(), 0.9, 0.999, 1e-8, 0.0);
  Rng rng(cfg.seed);
  const auto n = images.size(0);
  const int64_t bs = std::min<int64_t>(cfg.batch_size, n);
  MnistTrainResult res;
  net->train();
  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<int64_t> idx;
    for (int64_t k = 0; k < bs; ++k)
      idx.push_back(static_cast<int64_t>(rng.next_u64() % static_cast<std::uint64_t>(n)));
    const auto x1 = images.index_select(0, torch::tensor(idx)).to(dtype);
    const auto [g1, y1] = colorize_batch(x1, rng, cfg.color_noise);
    const auto g0 = normal_tensor(g1.sizes(), rng, dtype);
    const auto y0 = normal_tensor(y1.sizes(), rng, dtype);
    auto t = torch::empty({ bs }, torch::kFloat64);
    for (int64_t k = 0; k < bs; ++k)
      t[k] = rng.uniform();
    t = t.to(dtype);
    const auto tb = t.view({ bs, 1, 1, 1 });
    const auto gt = tb * g1 + (1 - tb) * g0;
    const auto yt = tb * y1 + (1 - tb) * y0;

    net->zero_grad();
    const auto [sg, sy] = net->forward(gt, yt, t);
    const auto loss = torch::mse_loss(sg, g1) + torch::mse_loss(sy, y1);
    const double value = loss.item<double>();
    if (!std::isfinite(value))
      throw MnistError("non-finite loss at step " + std::to_string(step));
    loss.backward();
    adam.step(cfg.learning_rate);
    res.losses.push_back(value);

    const double elapsed
        = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (log && cfg.log_every > 0 && step % cfg.log_every == 0)
      *log << nlohmann::json{ { "step", step }, { "loss", value }, { "seconds", elapsed } }.dump()
           << "\n";
    if (cfg.time_budget_s > 0.0 && elapsed > cfg.time_budget_s)
      break;
  }
  res.seconds
      = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  net->eval();
  return res;
}

std::vector<MnistSample> mnist_sample(DualUNet &net, int size, int n_steps,
                                      std::uint64_t g_seed,
                                      const std::vector<std::uint64_t> &y_seeds,
                                      Reconstruction rec) {
  if (n_steps < 1)
    throw MnistError("n_steps must be >= 1");
  torch::NoGradGuard guard;
  net->eval();
  const auto dtype = net->stem_g->weight.scalar_type();
  std::vector<MnistSample> out;
  for (auto seed: y_seeds) {
    Rng gr(g_seed), yr(seed);
    auto g = normal_tensor({ 1, 1, size, size }, gr, dtype);
    auto y = normal_tensor({ 1, 3, size, size }, yr, dtype);
    const double dt = 1.0 / n_steps;
    for (int k = 0; k < n_steps; ++k) {
      const double t = k * dt;
      const double step = k + 1 == n_steps ? 1.0 - t : dt;
      const auto tt = torch::full({ 1 }, t, dtype);
      const auto [sg, sy] = net->forward(g, y, tt);
      g = g + (sg - g) * (step / (1.0 - t));
      y = y + (sy - y) * (step / (1.0 - t));
    }
    MnistSample s;
    s.gray = g[0];
    s.y = y[0];
    const auto color = rec == Reconstruction::kDifference ? s.gray - s.y
                                                          : s.gray + (s.gray - s.y);
    s.color = color.clamp(0.0, 1.0);
    out.push_back(s);
  }
  return out;
}

int dominant_channel(const MnistSample &s, double threshold) {
  const auto mask = (s.gray > threshold).to(s.color.scalar_type());
  const auto count = mask.sum().clamp_min(1.0);
  const auto means = (s.color * mask).sum({ 1, 2 }) / count;
  return static_cast<int>(means.argmax().item<int64_t>());
}

void write_png_grid(const std::filesystem::path &path,
                    const std::vector<torch::Tensor> &images, int columns, int pad) {
  if (images.empty() || columns < 1)
    throw MnistError("write_png_grid: nothing to write");
  const int h = static_cast<int>(images[0].size(-2)), w = static_cast<int>(images[0].size(-1));
  const int n = static_cast<int>(images.size());
  const int cols = std::min(columns, n), rows = (n + cols - 1) / cols;
  const int width = cols * w + (cols + 1) * pad, height = rows * h + (rows + 1) * pad;
  std::vector<unsigned char> rgb(static_cast<std::size_t>(width) * height * 3, 255);
  for (int k = 0; k < n; ++k) {
    auto img = images[k].detach().to(torch::kFloat32).clamp(0.0, 1.0);
    if (img.size(0) == 1)
      img = img.expand({ 3, h, w });
    img = img.contiguous();
    const auto a = img.accessor<float, 3>();
    const int oy = pad + (k / cols) * (h + pad), ox = pad + (k % cols) * (w + pad);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c)
          rgb[(static_cast<std::size_t>(oy + y) * width + ox + x) * 3 + c]
              = static_cast<unsigned char>(a[c][y][x] * 255.0f + 0.5f);
  }

  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  FILE *fp = std::fopen(path.c_str(), "wb");
  if (!fp)
    throw MnistError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw MnistError("libpng failed writing " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, width, height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y)
    png_write_row(png, rgb.data() + static_cast<std::size_t>(y) * width * 3);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

}  // namespace flexiflow::mnist
