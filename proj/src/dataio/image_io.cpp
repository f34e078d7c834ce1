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

#include "dataio/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <memory>

#include "common/error.hpp"

namespace microseg::dataio {

using tensorops::Shape4;
using tensorops::Tensor;

namespace {

std::vector<uint8_t> ReadBytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  Require(static_cast<bool>(in), ErrorKind::kIo, "cannot open '" + path + "'");
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(in), {});
}

struct PngReadState {
  const std::vector<uint8_t>* bytes;
  size_t offset;
};

struct PngErrorState {
  char message[256] = "unknown error";
};

void PngReadFn(png_structp png, png_bytep out, png_size_t len) {
  auto* st = static_cast<PngReadState*>(png_get_io_ptr(png));
  if (st->offset + len > st->bytes->size()) png_error(png, "truncated PNG");
  std::copy_n(st->bytes->data() + st->offset, len, out);
  st->offset += len;
}

// Frames that call setjmp hold only trivially destructible locals.
void PngErrorFn(png_structp png, png_const_charp msg) {
  auto* st = static_cast<PngErrorState*>(png_get_error_ptr(png));
  std::snprintf(st->message, sizeof(st->message), "%s", msg);
  png_longjmp(png, 1);
}

void PngWarnFn(png_structp, png_const_charp) {}

bool PngReadHeader(png_structp png, png_infop info, int* width, int* height,
                   int* channels, size_t* rowbytes) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
  }
  if (depth == 16) png_set_strip_16(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  *width = static_cast<int>(png_get_image_width(png, info));
  *height = static_cast<int>(png_get_image_height(png, info));
  *channels = static_cast<int>(png_get_channels(png, info));
  *rowbytes = png_get_rowbytes(png, info);
  return true;
}

bool PngReadRows(png_structp png, png_bytepp rows) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_read_image(png, rows);
  return true;
}

Image8 DecodePng(const std::vector<uint8_t>& bytes, const std::string& path) {
  PngErrorState err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err,
                                           PngErrorFn, PngWarnFn);
  Require(png != nullptr, ErrorKind::kFormat, "libpng init failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_read_struct(p, i, nullptr); }
  } guard{&png, &info};
  PngReadState st{&bytes, 0};
  png_set_read_fn(png, &st, PngReadFn);
  Image8 img;
  size_t row = 0;
  if (!PngReadHeader(png, info, &img.width, &img.height, &img.channels, &row)) {
    Fail(ErrorKind::kFormat,
         std::string("PNG decode error: ") + err.message + " in '" + path + "'");
  }
  Require(img.channels == 1 || img.channels == 3, ErrorKind::kFormat,
          "unsupported PNG channel layout in '" + path + "'");
  img.pixels.resize(row * img.height);
  std::vector<png_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y) rows[y] = img.pixels.data() + y * row;
  if (!PngReadRows(png, rows.data())) {
    Fail(ErrorKind::kFormat,
         std::string("PNG decode error: ") + err.message + " in '" + path + "'");
  }
  return img;
}

bool PngWriteAll(png_structp png, png_infop info, std::FILE* f,
                 const Image8& img) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_init_io(png, f);
  png_set_IHDR(png, info, img.width, img.height, 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const size_t row = static_cast<size_t>(img.width) * img.channels;
  for (int y = 0; y < img.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(img.pixels.data() + y * row));
  }
  png_write_end(png, nullptr);
  return true;
}

class PnmParser {
 public:
  PnmParser(const std::vector<uint8_t>& b, const std::string& path)
      : b_(b), path_(path) {}

  void SkipSpace() {
    for (;;) {
      while (pos_ < b_.size() && std::isspace(b_[pos_])) ++pos_;
      if (pos_ < b_.size() && b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else {
        return;
      }
    }
  }

  int Int() {
    SkipSpace();
    Require(pos_ < b_.size() && std::isdigit(b_[pos_]), ErrorKind::kFormat,
            "malformed PNM header in '" + path_ + "'");
    int64_t v = 0;
    while (pos_ < b_.size() && std::isdigit(b_[pos_])) {
      v = v * 10 + (b_[pos_++] - '0');
      Require(v < (1 << 30), ErrorKind::kFormat, "PNM value too large");
    }
    return static_cast<int>(v);
  }

  Image8 Parse() {
    Require(b_.size() >= 2 && b_[0] == 'P', ErrorKind::kFormat,
            "not a PNM file: '" + path_ + "'");
    const char kind = static_cast<char>(b_[1]);
    Require(kind == '2' || kind == '3' || kind == '5' || kind == '6',
            ErrorKind::kFormat, "unsupported PNM variant in '" + path_ + "'");
    pos_ = 2;
    Image8 img;
    img.width = Int();
    img.height = Int();
    const int maxval = Int();
    Require(img.width > 0 && img.height > 0 && maxval > 0 && maxval < 65536,
            ErrorKind::kFormat, "invalid PNM dimensions in '" + path_ + "'");
    img.channels = (kind == '3' || kind == '6') ? 3 : 1;
    const size_t count =
        static_cast<size_t>(img.width) * img.height * img.channels;
    img.pixels.resize(count);
    auto to8 = [&](int v) {
      Require(v <= maxval, ErrorKind::kFormat, "PNM sample exceeds maxval");
      return static_cast<uint8_t>((v * 255 + maxval / 2) / maxval);
    };
    if (kind == '2' || kind == '3') {
      for (size_t i = 0; i < count; ++i) img.pixels[i] = to8(Int());
      return img;
    }
    ++pos_;  // single whitespace after maxval
    const size_t width = maxval > 255 ? 2 : 1;
    Require(b_.size() >= pos_ + count * width, ErrorKind::kFormat,
            "truncated PNM data in '" + path_ + "'");
    for (size_t i = 0; i < count; ++i) {
      int v = b_[pos_ + i * width];
      if (width == 2) v = (v << 8) | b_[pos_ + i * 2 + 1];
      img.pixels[i] = to8(v);
    }
    return img;
  }

 private:
  const std::vector<uint8_t>& b_;
  const std::string& path_;
  size_t pos_ = 0;
};

void WriteBytes(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  Require(static_cast<bool>(out), ErrorKind::kIo,
          "cannot write '" + path + "'");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  Require(static_cast<bool>(out), ErrorKind::kIo,
          "write failed for '" + path + "'");
}

void CheckImage(const Image8& img) {
  Require(img.width > 0 && img.height > 0 &&
              (img.channels == 1 || img.channels == 3) &&
              img.pixels.size() ==
                  static_cast<size_t>(img.width) * img.height * img.channels,
          ErrorKind::kShape, "malformed image buffer");
}

}  // namespace

Image8 ReadImage(const std::string& path) {
  const std::vector<uint8_t> bytes = ReadBytes(path);
  static const uint8_t kPngSig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  if (bytes.size() >= 8 && std::equal(kPngSig, kPngSig + 8, bytes.begin())) {
    return DecodePng(bytes, path);
  }
  return PnmParser(bytes, path).Parse();
}

void WritePng(const std::string& path, const Image8& img) {
  CheckImage(img);
  std::FILE* f = std::fopen(path.c_str(), "wb");
  Require(f != nullptr, ErrorKind::kIo, "cannot write '" + path + "'");
  PngErrorState err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err,
                                            PngErrorFn, PngWarnFn);
  png_infop info = png_create_info_struct(png);
  const bool ok = PngWriteAll(png, info, f, img);
  png_destroy_write_struct(&png, &info);
  const bool closed = std::fclose(f) == 0;
  Require(ok, ErrorKind::kIo,
          std::string("PNG encode error: ") + err.message + " for '" + path + "'");
  Require(closed, ErrorKind::kIo, "write failed for '" + path + "'");
}

void WritePnm(const std::string& path, const Image8& img) {
  CheckImage(img);
  std::string data = (img.channels == 1 ? "P5\n" : "P6\n") +
                     std::to_string(img.width) + " " +
                     std::to_string(img.height) + "\n255\n";
  data.append(img.pixels.begin(), img.pixels.end());
  WriteBytes(path, data);
}

Image8 CenterCrop(const Image8& img, int height, int width) {
  Require(img.height >= height && img.width >= width, ErrorKind::kShape,
          "image " + std::to_string(img.width) + "x" +
              std::to_string(img.height) + " is smaller than the " +
              std::to_string(width) + "x" + std::to_string(height) +
              " crop window");
  Image8 out{width, height, img.channels, {}};
  out.pixels.resize(static_cast<size_t>(width) * height * img.channels);
  const int y0 = (img.height - height) / 2;
  const int x0 = (img.width - width) / 2;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        out.pixels[(static_cast<size_t>(y) * width + x) * img.channels + c] =
            img.at(y0 + y, x0 + x, c);
      }
    }
  }
  return out;
}

Tensor<float> ImageToTensor(const Image8& img, int height, int width) {
  CheckImage(img);
  Tensor<float> t(Shape4{1, height, width, 3});
  const double sy = static_cast<double>(img.height) / height;
  const double sx = static_cast<double>(img.width) / width;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0,
                                 static_cast<double>(img.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0,
                                   static_cast<double>(img.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const int sc = img.channels == 1 ? 0 : c;
        const double top =
            img.at(y0, x0, sc) * (1.0 - wx) + img.at(y0, x1, sc) * wx;
        const double bot =
            img.at(y1, x0, sc) * (1.0 - wx) + img.at(y1, x1, sc) * wx;
        t.at(0, y, x, c) =
            static_cast<float>((top * (1.0 - wy) + bot * wy) / 255.0);
      }
    }
  }
  return t;
}

Tensor<float> MaskToTensor(const Image8& mask, int height, int width,
                           bool* non_binary) {
  CheckImage(mask);
  uint8_t max_value = 0;
  for (size_t i = 0; i < mask.pixels.size(); i += mask.channels) {
    max_value = std::max(max_value, mask.pixels[i]);
  }
  const bool labels01 = max_value <= 1;
  bool odd = false;
  for (size_t i = 0; i < mask.pixels.size(); i += mask.channels) {
    const uint8_t v = mask.pixels[i];
    if (v != 0 && v != max_value) odd = true;
  }
  if (non_binary) *non_binary = odd;
  Tensor<float> t(Shape4{1, height, width, 1});
  for (int y = 0; y < height; ++y) {
    const int sy = std::min(
        mask.height - 1,
        static_cast<int>(std::floor((y + 0.5) * mask.height / height)));
    for (int x = 0; x < width; ++x) {
      const int sx = std::min(
          mask.width - 1,
          static_cast<int>(std::floor((x + 0.5) * mask.width / width)));
      const uint8_t v = mask.at(sy, sx, 0);
      t.at(0, y, x, 0) = (labels01 ? v >= 1 : v > 127) ? 1.0f : 0.0f;
    }
  }
  return t;
}

Image8 TensorToImage(const Tensor<float>& t, int item) {
  Require(t.c() == 1 || t.c() == 3, ErrorKind::kShape,
          "only 1- or 3-channel tensors convert to images");
  Image8 img{t.w(), t.h(), t.c(), {}};
  img.pixels.resize(static_cast<size_t>(t.h()) * t.w() * t.c());
  const int64_t base = int64_t{item} * t.h() * t.w() * t.c();
  for (size_t i = 0; i < img.pixels.size(); ++i) {
    const double v = std::clamp(static_cast<double>(t[base + i]), 0.0, 1.0);
    img.pixels[i] = static_cast<uint8_t>(std::floor(v * 255.0 + 0.5));
  }
  return img;
}

Image8 OverlayMask(const Tensor<float>& image, const Tensor<float>& probs,
                   double threshold, double alpha) {
  Require(image.c() == 3 && probs.c() == 1 && image.h() == probs.h() &&
              image.w() == probs.w(),
          ErrorKind::kShape, "overlay needs an RGB image and a matching 1-channel map");
  Image8 img = TensorToImage(image);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      if (probs.at(0, y, x, 0) < threshold) continue;
      uint8_t* px = &img.pixels[(static_cast<size_t>(y) * img.width + x) * 3];
      const double red[3] = {255.0, 0.0, 0.0};
      for (int c = 0; c < 3; ++c) {
        px[c] = static_cast<uint8_t>(
            std::floor((1.0 - alpha) * px[c] + alpha * red[c] + 0.5));
      }
    }
  }
  return img;
}

Image8 BinaryMask(const Tensor<float>& probs, double threshold) {
  Require(probs.c() == 1, ErrorKind::kShape, "mask needs a 1-channel map");
  Image8 img{probs.w(), probs.h(), 1, {}};
  img.pixels.resize(static_cast<size_t>(probs.h()) * probs.w());
  for (size_t i = 0; i < img.pixels.size(); ++i) {
    img.pixels[i] = probs[i] >= threshold ? 255 : 0;
  }
  return img;
}

}  // namespace microseg::dataio
