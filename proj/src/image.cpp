#include "gait/image.hpp"

#include <algorithm>
#include <cmath>

#include "gait/errors.hpp"

namespace gait::img {

namespace {

void need_rank2(const TensorF& img, const char* who) {
  if (img.rank() != 2)
    throw ConfigError(std::string(who) + " wants an (H, W) image, got " + shape_str(img.shape()));
}

}  // namespace

TensorF resize_bilinear(const TensorF& img, int oh, int ow) {
  need_rank2(img, "resize");
  if (oh < 1 || ow < 1) throw ConfigError("resize target must be positive");
  const int h = img.dim(0), w = img.dim(1);
  TensorF out({oh, ow});
  // align corner centers: source coordinate of output pixel center
  const double sy = static_cast<double>(h) / oh;
  const double sx = static_cast<double>(w) / ow;
  for (int y = 0; y < oh; ++y) {
    const double fy = std::max(0.0, (y + 0.5) * sy - 0.5);
    const int y0 = std::min(h - 1, static_cast<int>(fy));
    const int y1 = std::min(h - 1, y0 + 1);
    const float wy = static_cast<float>(fy - y0);
    for (int x = 0; x < ow; ++x) {
      const double fx = std::max(0.0, (x + 0.5) * sx - 0.5);
      const int x0 = std::min(w - 1, static_cast<int>(fx));
      const int x1 = std::min(w - 1, x0 + 1);
      const float wx = static_cast<float>(fx - x0);
      const float top = img[y0 * w + x0] * (1 - wx) + img[y0 * w + x1] * wx;
      const float bot = img[y1 * w + x0] * (1 - wx) + img[y1 * w + x1] * wx;
      out[y * ow + x] = top * (1 - wy) + bot * wy;
    }
  }
  return out;
}

TensorF mirror_h(const TensorF& img) {
  need_rank2(img, "mirror");
  const int h = img.dim(0), w = img.dim(1);
  TensorF out(img.shape());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out[y * w + x] = img[y * w + (w - 1 - x)];
  return out;
}

TensorF shift2d(const TensorF& img, int dy, int dx, bool zero_fill) {
  need_rank2(img, "shift");
  const int h = img.dim(0), w = img.dim(1);
  TensorF out(img.shape());
  for (int y = 0; y < h; ++y) {
    const int sy = y - dy;
    for (int x = 0; x < w; ++x) {
      const int sx = x - dx;
      if (sy < 0 || sy >= h || sx < 0 || sx >= w) {
        out[y * w + x] = zero_fill
                             ? 0.0f
                             : img[std::clamp(sy, 0, h - 1) * w + std::clamp(sx, 0, w - 1)];
      } else {
        out[y * w + x] = img[sy * w + sx];
      }
    }
  }
  return out;
}

TensorF median_background(const std::vector<TensorF>& frames) {
  if (frames.empty()) throw ConfigError("background model needs at least one frame");
  for (const auto& f : frames) {
    need_rank2(f, "background");
    if (f.shape() != frames.front().shape())
      throw ConfigError("background frames disagree on shape");
  }
  TensorF out(frames.front().shape());
  std::vector<float> column(frames.size());
  for (std::int64_t i = 0; i < out.numel(); ++i) {
    for (std::size_t t = 0; t < frames.size(); ++t) column[t] = frames[t][i];
    const std::size_t mid = column.size() / 2;
    std::nth_element(column.begin(), column.begin() + mid, column.end());
    out[i] = column[mid];
  }
  return out;
}

double locate_center_x(const TensorF& frame, const TensorF& background, float threshold) {
  need_rank2(frame, "localize");
  if (frame.shape() != background.shape())
    throw ConfigError("frame and background disagree on shape");
  const int h = frame.dim(0), w = frame.dim(1);
  double weight = 0.0, moment = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (std::abs(frame[y * w + x] - background[y * w + x]) > threshold) {
        weight += 1.0;
        moment += x;
      }
  if (weight == 0.0) return (w - 1) / 2.0;
  return moment / weight;
}

TensorF crop_x(const TensorF& img, int x0, int w) {
  need_rank2(img, "crop");
  const int h = img.dim(0), iw = img.dim(1);
  if (w < 1 || x0 < 0 || x0 + w > iw)
    throw ConfigError("crop window [" + std::to_string(x0) + ", " + std::to_string(x0 + w) +
                      ") outside image width " + std::to_string(iw));
  TensorF out({h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out[y * w + x] = img[y * iw + x0 + x];
  return out;
}

TensorF fill_holes_scanline(const TensorF& img) {
  need_rank2(img, "hole filling");
  const int h = img.dim(0), w = img.dim(1);
  TensorF out = img;
  for (int y = 0; y < h; ++y) {
    float* row = out.data() + static_cast<std::int64_t>(y) * w;
    for (int x = 0; x < w; ++x) {
      if (row[x] != 0.0f) continue;
      int left = x - 1, right = x + 1;
      while (left >= 0 && img[y * w + left] == 0.0f) --left;
      while (right < w && img[y * w + right] == 0.0f) ++right;
      const bool has_l = left >= 0, has_r = right < w;
      if (has_l && (!has_r || x - left <= right - x))
        row[x] = img[y * w + left];
      else if (has_r)
        row[x] = img[y * w + right];
    }
  }
  return out;
}

}  // namespace gait::img
