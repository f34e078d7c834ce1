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

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tensorops/tensor.hpp"

namespace microseg::dataio {

// 8-bit interleaved pixels, row-major. channels is 1 (gray) or 3 (RGB).
struct Image8 {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<uint8_t> pixels;

  uint8_t at(int y, int x, int c) const {
    return pixels[(static_cast<size_t>(y) * width + x) * channels + c];
  }
};

// Decodes PNG (any bit depth; alpha dropped, palettes expanded, 16-bit
// reduced) or binary/ASCII PGM and PPM. The format is chosen by magic bytes.
// Throws Error(kIo) for unreadable files and Error(kFormat) for bad content.
Image8 ReadImage(const std::string& path);

void WritePng(const std::string& path, const Image8& image);
// P5 for gray, P6 for RGB.
void WritePnm(const std::string& path, const Image8& image);

// Central window of the given size. Throws Error(kShape) when the image is
// smaller than the window.
Image8 CenterCrop(const Image8& image, int height, int width);

// Image as a (1, height, width, 3) tensor in [0, 1], resized bilinearly with
// half-pixel centers. Gray input is replicated across channels.
tensorops::Tensor<float> ImageToTensor(const Image8& image, int height,
                                       int width);

// Mask as a (1, height, width, 1) tensor in {0, 1}: nearest-neighbor resize,
// then value > 127 is crack. Masks whose maximum is 1 are read as 0/1 labels.
// `non_binary` is set when the source held values other than 0 and the
// maximum label.
tensorops::Tensor<float> MaskToTensor(const Image8& mask, int height, int width,
                                      bool* non_binary = nullptr);

// Quantizes a [0, 1] tensor item to 8 bits (round half up, clamped).
Image8 TensorToImage(const tensorops::Tensor<float>& t, int item = 0);

// RGB copy of `image` (1, H, W, 3) with pixels whose probability is at least
// `threshold` blended toward pure red by `alpha`.
Image8 OverlayMask(const tensorops::Tensor<float>& image,
                   const tensorops::Tensor<float>& probs, double threshold,
                   double alpha = 0.5);

// Gray 0/255 image of probs >= threshold.
Image8 BinaryMask(const tensorops::Tensor<float>& probs, double threshold);

}  // namespace microseg::dataio
