#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "afford/util.hpp"

namespace afford {

// RGB float image, values in [0,1], row-major interleaved.
struct Image {
  int h = 0, w = 0;
  std::vector<float> px;

  Image() = default;
  Image(int h_, int w_) : h(h_), w(w_), px(size_t(h_) * w_ * 3, 0.f) {}

  float& at(int y, int x, int c) { return px[(size_t(y) * w + x) * 3 + c]; }
  float at(int y, int x, int c) const { return px[(size_t(y) * w + x) * 3 + c]; }

  void set(int y, int x, float r, float g, float b) {
    if (y < 0 || y >= h || x < 0 || x >= w) return;
    at(y, x, 0) = r;
    at(y, x, 1) = g;
    at(y, x, 2) = b;
  }

  static Image filled(int h, int w, float r, float g, float b) {
    Image im(h, w);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) im.set(y, x, r, g, b);
    return im;
  }

  bool same_dims(const Image& o) const { return h == o.h && w == o.w; }

  bool operator==(const Image& o) const { return h == o.h && w == o.w && px == o.px; }
};

inline std::vector<unsigned char> image_u8(const Image& im) {
  std::vector<unsigned char> out(im.px.size());
  for (size_t i = 0; i < im.px.size(); ++i) {
    float v = im.px[i];
    v = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
    out[i] = static_cast<unsigned char>(std::lround(v * 255.f));
  }
  return out;
}

// Canonical content hash: quantized 8-bit pixels, so it matches what lossless
// persistence round-trips.
inline uint64_t image_hash(const Image& im) {
  auto u8 = image_u8(im);
  uint64_t hd = fnv1a64(u8.data(), u8.size());
  int dims[2] = {im.h, im.w};
  return fnv1a64(dims, sizeof(dims), hd);
}

// Binary PPM (P6, maxval 255) — the project's lossless raster format.
inline void write_ppm(const std::string& path, const Image& im) {
  std::ofstream f(path, std::ios::binary);
  check(f.good(), "write_ppm: cannot open " + path);
  f << "P6\n" << im.w << " " << im.h << "\n255\n";
  auto u8 = image_u8(im);
  f.write(reinterpret_cast<const char*>(u8.data()), std::streamsize(u8.size()));
  check(f.good(), "write_ppm: write failed " + path);
}

inline Image read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  check(f.good(), "read_ppm: cannot open " + path);
  std::string magic;
  f >> magic;
  check(magic == "P6", "read_ppm: not a P6 ppm: " + path);
  auto next_int = [&f, &path]() {
    // skip whitespace and # comments
    int c = f.get();
    while (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '#') {
      if (c == '#')
        while (c != '\n' && c != EOF) c = f.get();
      c = f.get();
    }
    check(c != EOF, "read_ppm: truncated header: " + path);
    int v = 0;
    while (c >= '0' && c <= '9') {
      v = v * 10 + (c - '0');
      c = f.get();
    }
    return v;
  };
  int w = next_int(), h = next_int(), maxv = next_int();
  check(w > 0 && h > 0 && maxv == 255, "read_ppm: unsupported header: " + path);
  std::vector<unsigned char> buf(size_t(h) * w * 3);
  f.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size()));
  check(f.gcount() == std::streamsize(buf.size()), "read_ppm: truncated pixels: " + path);
  Image im(h, w);
  for (size_t i = 0; i < buf.size(); ++i) im.px[i] = float(buf[i]) / 255.f;
  return im;
}

inline Image resize_nearest(const Image& im, int nh, int nw) {
  if (im.h == nh && im.w == nw) return im;
  Image out(nh, nw);
  for (int y = 0; y < nh; ++y)
    for (int x = 0; x < nw; ++x) {
      int sy = std::min(im.h - 1, int(int64_t(y) * im.h / nh));
      int sx = std::min(im.w - 1, int(int64_t(x) * im.w / nw));
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = im.at(sy, sx, c);
    }
  return out;
}

// Grid of images with a 1-px separator, used for sample panels.
inline Image contact_sheet(const std::vector<Image>& images, int cols) {
  check(!images.empty(), "contact_sheet: no images");
  int rows = (int(images.size()) + cols - 1) / cols;
  int ch = images[0].h, cw = images[0].w;
  Image sheet = Image::filled(rows * (ch + 1) + 1, cols * (cw + 1) + 1, 1.f, 1.f, 1.f);
  for (size_t i = 0; i < images.size(); ++i) {
    check(images[i].h == ch && images[i].w == cw, "contact_sheet: mixed sizes");
    int r = int(i) / cols, c = int(i) % cols;
    for (int y = 0; y < ch; ++y)
      for (int x = 0; x < cw; ++x)
        sheet.set(r * (ch + 1) + 1 + y, c * (cw + 1) + 1 + x, images[i].at(y, x, 0),
                  images[i].at(y, x, 1), images[i].at(y, x, 2));
  }
  return sheet;
}

inline Image noise_image(int h, int w, uint64_t seed) {
  Rng rng(seed);
  Image im(h, w);
  for (auto& v : im.px) v = float(rng.uniform());
  return im;
}

}  // namespace afford
