// Copyright 2026 The MicroSeg Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "dataio/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>

#include "common/error.hpp"
#include "common/rng.hpp"
#include "common/threads.hpp"
#include "dataio/image_io.hpp"

namespace microseg::dataio {

namespace fs = std::filesystem;
using tensorops::Shape4;
using tensorops::Tensor;

namespace {

bool IsImageFile(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".pgm" || ext == ".ppm" || ext == ".pnm";
}

std::map<std::string, fs::path> ListByStem(const fs::path& dir) {
  Require(fs::is_directory(dir), ErrorKind::kNotFound,
          "missing directory '" + dir.string() + "'");
  std::map<std::string, fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || !IsImageFile(entry.path())) continue;
    const std::string stem = entry.path().stem().string();
    Require(out.emplace(stem, entry.path()).second, ErrorKind::kInvalidArgument,
            "duplicate stem '" + stem + "' in '" + dir.string() + "'");
  }
  return out;
}

}  // namespace

LoadedDataset LoadDataset(const std::string& root, const LoadOptions& opt) {
  Require(opt.height >= 1 && opt.width >= 1, ErrorKind::kInvalidArgument,
          "target size must be positive");
  const auto images = ListByStem(fs::path(root) / "images");
  const auto masks = ListByStem(fs::path(root) / "masks");
  for (const auto& [stem, path] : images) {
    Require(masks.count(stem) == 1, ErrorKind::kNotFound,
            "image '" + stem + "' has no mask");
  }
  for (const auto& [stem, path] : masks) {
    Require(images.count(stem) == 1, ErrorKind::kNotFound,
            "mask '" + stem + "' has no image");
  }
  Require(!images.empty(), ErrorKind::kEmpty,
          "dataset '" + root + "' contains no image/mask pairs");

  std::vector<std::pair<std::string, fs::path>> order(images.begin(), images.end());
  LoadedDataset out;
  out.samples.resize(order.size());
  std::vector<char> odd(order.size(), 0);
  ParallelFor(order.size(), opt.workers, [&](size_t i) {
    const std::string& stem = order[i].first;
    Image8 img = ReadImage(order[i].second.string());
    Image8 mask = ReadImage(masks.at(stem).string());
    Require(img.width == mask.width && img.height == mask.height,
            ErrorKind::kShape, "image and mask sizes differ for '" + stem + "'");
    if (opt.center_crop) {
      img = CenterCrop(img, opt.height, opt.width);
      mask = CenterCrop(mask, opt.height, opt.width);
    }
    bool non_binary = false;
    out.samples[i].name = stem;
    out.samples[i].image = ImageToTensor(img, opt.height, opt.width);
    out.samples[i].mask = MaskToTensor(mask, opt.height, opt.width, &non_binary);
    odd[i] = non_binary ? 1 : 0;
  });
  for (size_t i = 0; i < order.size(); ++i) {
    if (odd[i]) {
      out.warnings.push_back("mask '" + order[i].first +
                             "' is not strictly binary; re-thresholded at 127");
    }
  }
  return out;
}

void SaveDataset(const std::string& root, const std::vector<SamplePair>& samples,
                 const std::string& format) {
  Require(format == "png" || format == "pnm", ErrorKind::kInvalidArgument,
          "dataset format must be 'png' or 'pnm'");
  const fs::path img_dir = fs::path(root) / "images";
  const fs::path mask_dir = fs::path(root) / "masks";
  std::error_code ec;
  fs::create_directories(img_dir, ec);
  fs::create_directories(mask_dir, ec);
  Require(fs::is_directory(img_dir) && fs::is_directory(mask_dir),
          ErrorKind::kIo, "cannot create dataset directories under '" + root + "'");
  for (const auto& s : samples) {
    const Image8 img = TensorToImage(s.image);
    const Image8 mask = TensorToImage(s.mask);
    if (format == "png") {
      WritePng((img_dir / (s.name + ".png")).string(), img);
      WritePng((mask_dir / (s.name + ".png")).string(), mask);
    } else {
      WritePnm((img_dir / (s.name + ".ppm")).string(), img);
      WritePnm((mask_dir / (s.name + ".pgm")).string(), mask);
    }
  }
}

DatasetSplits Split(size_t n, const std::array<double, 3>& ratios, uint64_t seed) {
  for (double r : ratios) {
    Require(r >= 0.0 && std::isfinite(r), ErrorKind::kInvalidArgument,
            "split ratios must be non-negative");
  }
  Require(std::fabs(ratios[0] + ratios[1] + ratios[2] - 1.0) < 1e-6,
          ErrorKind::kInvalidArgument, "split ratios must sum to 1");
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  CounterRng rng = CounterRng(seed).Fork(0x5b117);
  Shuffle(idx, rng);
  const double dn = static_cast<double>(n);
  const size_t train_end =
      std::min(n, static_cast<size_t>(std::floor(ratios[0] * dn + 1e-9)));
  const size_t val_end = std::min(
      n, std::max(train_end, static_cast<size_t>(std::floor(
                                 (ratios[0] + ratios[1]) * dn + 1e-9))));
  DatasetSplits s;
  s.train.assign(idx.begin(), idx.begin() + train_end);
  s.val.assign(idx.begin() + train_end, idx.begin() + val_end);
  s.test.assign(idx.begin() + val_end, idx.end());
  if (s.train.empty()) s.warnings.push_back("training split is empty");
  if (s.val.empty()) s.warnings.push_back("validation split is empty");
  if (s.test.empty()) s.warnings.push_back("test split is empty");
  return s;
}

std::vector<evaluation::LabelledImage> Select(const std::vector<SamplePair>& samples,
                                              const std::vector<size_t>& indices) {
  std::vector<evaluation::LabelledImage> out;
  out.reserve(indices.size());
  for (size_t i : indices) {
    Require(i < samples.size(), ErrorKind::kInvalidArgument,
            "sample index out of range");
    out.push_back({&samples[i].image, &samples[i].mask});
  }
  return out;
}

std::vector<evaluation::LabelledImage> All(const std::vector<SamplePair>& samples) {
  std::vector<size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), size_t{0});
  return Select(samples, idx);
}

namespace {

// cos and sin of 2*pi*k/16, tabulated so the generator never calls libm.
constexpr double kC1 = 0.92387953251128674;
constexpr double kC2 = 0.70710678118654757;
constexpr double kC3 = 0.38268343236508978;
constexpr double kCos[16] = {1,    kC1,  kC2,  kC3,  0,    -kC3, -kC2, -kC1,
                             -1,   -kC1, -kC2, -kC3, 0,    kC3,  kC2,  kC1};
constexpr double kSin[16] = {0,    kC3,  kC2,  kC1,  1,    kC1,  kC2,  kC3,
                             0,    -kC3, -kC2, -kC1, -1,   -kC1, -kC2, -kC3};

class ValueNoise {
 public:
  ValueNoise(CounterRng& rng, int h, int w, int cell) : cell_(cell) {
    gh_ = h / cell + 2;
    gw_ = w / cell + 2;
    grid_.resize(static_cast<size_t>(gh_) * gw_);
    for (double& v : grid_) v = rng.NextDouble();
  }

  double At(int y, int x) const {
    const int gy = y / cell_;
    const int gx = x / cell_;
    const double ty = Smooth(static_cast<double>(y % cell_) / cell_);
    const double tx = Smooth(static_cast<double>(x % cell_) / cell_);
    const double a = G(gy, gx) * (1 - tx) + G(gy, gx + 1) * tx;
    const double b = G(gy + 1, gx) * (1 - tx) + G(gy + 1, gx + 1) * tx;
    return a * (1 - ty) + b * ty;
  }

 private:
  static double Smooth(double t) { return t * t * (3.0 - 2.0 * t); }
  double G(int y, int x) const { return grid_[static_cast<size_t>(y) * gw_ + x]; }

  int cell_;
  int gh_ = 0;
  int gw_ = 0;
  std::vector<double> grid_;
};

struct Canvas {
  int h;
  int w;
  std::vector<double> value;  // background luminance
  std::vector<double> shade;  // multiplicative crack darkening
  std::vector<uint8_t> mask;
};

int64_t CountMask(const std::vector<uint8_t>& m) {
  return std::count(m.begin(), m.end(), uint8_t{1});
}

// One random-walk polyline painted into `mask` and `shade`.
void DrawCrack(CounterRng& rng, Canvas& cv, std::vector<uint8_t>& mask,
               std::vector<double>& shade) {
  const double s = std::min(cv.h, cv.w) / 96.0;
  double x = rng.Uniform(0.1 * cv.w, 0.9 * cv.w);
  double y = rng.Uniform(0.1 * cv.h, 0.9 * cv.h);
  int d = static_cast<int>(rng.Below(16));
  const int length = static_cast<int>(rng.Range(static_cast<int64_t>(60 * s),
                                                static_cast<int64_t>(140 * s)));
  const int width = static_cast<int>(rng.Range(1, 3));
  const double dark = rng.Uniform(0.10, 0.30);
  const int lo = -(width - 1) / 2;
  const int hi = width / 2;
  for (int step = 0; step < length; ++step) {
    const int px = static_cast<int>(std::floor(x));
    const int py = static_cast<int>(std::floor(y));
    for (int dy = lo; dy <= hi; ++dy) {
      for (int dx = lo; dx <= hi; ++dx) {
        const int yy = py + dy;
        const int xx = px + dx;
        if (yy < 0 || yy >= cv.h || xx < 0 || xx >= cv.w) continue;
        const size_t k = static_cast<size_t>(yy) * cv.w + xx;
        mask[k] = 1;
        shade[k] = std::min(shade[k], dark);
      }
    }
    const uint64_t turn = rng.Below(8);
    if (turn == 0) d = (d + 15) % 16;
    if (turn == 1) d = (d + 1) % 16;
    x += kCos[d];
    y += kSin[d];
    if (x < 1.0 || x > cv.w - 2.0) {
      d = (24 - d) % 16;
      x = std::clamp(x, 1.0, cv.w - 2.0);
    }
    if (y < 1.0 || y > cv.h - 2.0) {
      d = (16 - d) % 16;
      y = std::clamp(y, 1.0, cv.h - 2.0);
    }
  }
}

SamplePair SynthOne(uint64_t seed, int index, const SynthOptions& opt) {
  CounterRng rng = CounterRng(seed).Fork(static_cast<uint64_t>(index));
  const int h = opt.height;
  const int w = opt.width;
  Canvas cv{h, w, std::vector<double>(static_cast<size_t>(h) * w),
            std::vector<double>(static_cast<size_t>(h) * w, 1.0),
            std::vector<uint8_t>(static_cast<size_t>(h) * w, 0)};

  const double base = rng.Uniform(0.45, 0.75);
  const double gx = rng.Uniform(-0.12, 0.12);
  const double gy = rng.Uniform(-0.12, 0.12);
  const double amp = rng.Uniform(0.04, 0.10);
  const double tint[3] = {rng.Uniform(0.94, 1.06), rng.Uniform(0.94, 1.06),
                          rng.Uniform(0.94, 1.06)};
  const ValueNoise coarse(rng, h, w, 16);
  const ValueNoise fine(rng, h, w, 6);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double tex = 0.6 * coarse.At(y, x) + 0.4 * fine.At(y, x) - 0.5;
      cv.value[static_cast<size_t>(y) * w + x] =
          base + gx * (static_cast<double>(x) / w - 0.5) +
          gy * (static_cast<double>(y) / h - 0.5) + 2.0 * amp * tex +
          rng.Uniform(-0.02, 0.02);
    }
  }

  // Cracks are added while the positive fraction stays under 7.5%, and
  // until it reaches 0.3%.
  const int64_t total = int64_t{h} * w;
  const int wanted = static_cast<int>(rng.Range(1, 3));
  for (int attempt = 0; attempt < 8; ++attempt) {
    const int64_t have = CountMask(cv.mask);
    if (attempt >= wanted && have * 1000 >= total * 3) break;
    std::vector<uint8_t> mask = cv.mask;
    std::vector<double> shade = cv.shade;
    DrawCrack(rng, cv, mask, shade);
    if (CountMask(mask) * 1000 > total * 75) {
      if (have > 0) break;
      continue;
    }
    cv.mask = std::move(mask);
    cv.shade = std::move(shade);
  }

  SamplePair s;
  char name[32];
  std::snprintf(name, sizeof(name), "synth_%05d", index);
  s.name = name;
  s.image = Tensor<float>(Shape4{1, h, w, 3});
  s.mask = Tensor<float>(Shape4{1, h, w, 1});
  for (int64_t k = 0; k < total; ++k) {
    const double v = cv.value[k] * cv.shade[k];
    for (int c = 0; c < 3; ++c) {
      s.image[k * 3 + c] = static_cast<float>(std::clamp(v * tint[c], 0.0, 1.0));
    }
    s.mask[k] = cv.mask[k] ? 1.0f : 0.0f;
  }
  return s;
}

}  // namespace

std::vector<SamplePair> SynthCracks(int n, uint64_t seed, const SynthOptions& opt) {
  Require(n >= 1, ErrorKind::kInvalidArgument, "sample count must be >= 1");
  Require(opt.height >= 16 && opt.width >= 16, ErrorKind::kInvalidArgument,
          "synthetic images must be at least 16x16");
  std::vector<SamplePair> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(SynthOne(seed, i, opt));
  return out;
}

double PositiveRate(const SamplePair& s) {
  double pos = 0.0;
  for (float v : s.mask.vec()) pos += v;
  return pos / static_cast<double>(s.mask.size());
}

uint64_t SampleHash(const SamplePair& s) {
  uint64_t h = Fnv1a(s.image.ptr(), s.image.vec().size() * sizeof(float));
  return Fnv1a(s.mask.ptr(), s.mask.vec().size() * sizeof(float), h);
}

}  // namespace microseg::dataio
