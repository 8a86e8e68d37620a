#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ovlift/common.hpp"

namespace ovlift {

/// Dense row-major boolean mask.
struct Mask2D {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> data; // size width*height, 0/1

  Mask2D() = default;
  Mask2D(int w, int h) : width(w), height(h), data(static_cast<size_t>(w) * h, 0) {}

  bool at(int x, int y) const { return data[static_cast<size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v) { data[static_cast<size_t>(y) * width + x] = v ? 1 : 0; }
  bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
  size_t count() const {
    size_t c = 0;
    for (uint8_t b : data) c += b;
    return c;
  }
};

/// Run-length encoding, row-major, alternating zero/one run lengths starting
/// with the zero run (a mask that begins with a one gets a leading 0).
inline std::string rle_encode(const Mask2D& mask) {
  std::ostringstream out;
  uint8_t current = 0;
  long long run = 0;
  bool first = true;
  auto emit = [&](long long n) {
    if (!first) out << ' ';
    out << n;
    first = false;
  };
  for (uint8_t b : mask.data) {
    uint8_t v = b ? 1 : 0;
    if (v == current) {
      ++run;
    } else {
      emit(run);
      current = v;
      run = 1;
    }
  }
  if (!mask.data.empty()) emit(run);
  return out.str();
}

inline Mask2D rle_decode(const std::string& runs, int width, int height) {
  if (width <= 0 || height <= 0) throw argument_error("rle_decode: non-positive mask dimensions");
  Mask2D mask(width, height);
  std::istringstream in(runs);
  long long total = 0;
  const long long expected = static_cast<long long>(width) * height;
  uint8_t value = 0;
  long long run;
  while (in >> run) {
    if (run < 0) throw consistency_error("rle_decode: negative run length");
    if (total + run > expected) throw consistency_error("rle_decode: runs exceed mask size");
    if (value)
      for (long long i = 0; i < run; ++i) mask.data[total + i] = 1;
    total += run;
    value ^= 1;
  }
  if (!in.eof() && in.fail()) throw consistency_error("rle_decode: non-integer token in run list");
  if (total != expected)
    throw consistency_error("rle_decode: runs sum to " + std::to_string(total) + ", expected " +
                            std::to_string(expected));
  return mask;
}

/// A 2D mask held RLE-compressed, tagged with the (frame, prompt) that produced it.
struct MaskRecord {
  int frame_id = -1;
  int prompt_id = -1;
  int width = 0;
  int height = 0;
  std::string rle;

  Mask2D decode() const { return rle_decode(rle, width, height); }
  static MaskRecord encode(int frame_id, int prompt_id, const Mask2D& mask) {
    return {frame_id, prompt_id, mask.width, mask.height, rle_encode(mask)};
  }
};

/// On-disk .rle: first line "H W", second line the run lengths. Frame and
/// prompt ids live in the surrounding path, not the file.
inline void write_mask_rle(const std::string& path, const MaskRecord& rec) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot open for writing: " + path);
  out << rec.height << ' ' << rec.width << '\n' << rec.rle << '\n';
  if (!out) throw io_error("write failed: " + path);
}

inline MaskRecord read_mask_rle(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open: " + path);
  int h = 0, w = 0;
  std::string header;
  if (!std::getline(in, header)) throw io_error("empty rle file: " + path);
  {
    std::istringstream hs(header);
    if (!(hs >> h >> w)) throw consistency_error("bad rle header in " + path);
  }
  std::string runs, line;
  while (std::getline(in, line)) {
    if (!runs.empty()) runs += ' ';
    runs += line;
  }
  MaskRecord rec;
  rec.width = w;
  rec.height = h;
  rec.rle = runs;
  try {
    rec.decode(); // validate now so errors name the file
  } catch (const std::exception& e) {
    throw consistency_error(std::string(e.what()) + " in " + path);
  }
  return rec;
}

/// Half-open pixel rectangle [x0,x1) x [y0,y1).
struct CropBox {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
};

/// Bounding box of the true pixels, padded by pad_frac per side and clamped to
/// the image. Empty mask -> nullopt.
inline std::optional<CropBox> padded_bbox(const Mask2D& mask, double pad_frac) {
  int minx = mask.width, miny = mask.height, maxx = -1, maxy = -1;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask.at(x, y)) {
        minx = std::min(minx, x);
        miny = std::min(miny, y);
        maxx = std::max(maxx, x);
        maxy = std::max(maxy, y);
      }
  if (maxx < 0) return std::nullopt;
  int pw = static_cast<int>(std::ceil((maxx - minx + 1) * pad_frac));
  int ph = static_cast<int>(std::ceil((maxy - miny + 1) * pad_frac));
  CropBox box;
  box.x0 = std::max(0, minx - pw);
  box.y0 = std::max(0, miny - ph);
  box.x1 = std::min(mask.width, maxx + 1 + pw);
  box.y1 = std::min(mask.height, maxy + 1 + ph);
  return box;
}

} // namespace ovlift
