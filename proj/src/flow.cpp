#include "gait/flow.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "gait/errors.hpp"
#include "gait/image.hpp"

namespace gait::flow {

namespace {

float sample_clamped(const TensorF& img, int h, int w, float fy, float fx) {
  fy = std::clamp(fy, 0.0f, static_cast<float>(h - 1));
  fx = std::clamp(fx, 0.0f, static_cast<float>(w - 1));
  const int y0 = static_cast<int>(fy), x0 = static_cast<int>(fx);
  const int y1 = std::min(h - 1, y0 + 1), x1 = std::min(w - 1, x0 + 1);
  const float wy = fy - y0, wx = fx - x0;
  const float top = img[y0 * w + x0] * (1 - wx) + img[y0 * w + x1] * wx;
  const float bot = img[y1 * w + x0] * (1 - wx) + img[y1 * w + x1] * wx;
  return top * (1 - wy) + bot * wy;
}

/// Backward-warp `img` by the current flow: out(y,x) = img(y + v, x + u).
TensorF warp(const TensorF& img, const TensorF& u, const TensorF& v) {
  const int h = img.dim(0), w = img.dim(1);
  TensorF out({h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out[y * w + x] = sample_clamped(img, h, w, y + v[y * w + x], x + u[y * w + x]);
  return out;
}

float at_clamped(const TensorF& t, int h, int w, int y, int x) {
  return t[std::clamp(y, 0, h - 1) * w + std::clamp(x, 0, w - 1)];
}

/// One pyramid level of iterative relaxation: updates (u, v) in place by
/// the residual between `prev` and `next` warped with the current field.
void relax_level(const TensorF& prev, const TensorF& next, TensorF& u, TensorF& v,
                 const Params& p) {
  const int h = prev.dim(0), w = prev.dim(1);
  const TensorF warped = warp(next, u, v);

  // spatial gradients averaged over both frames; temporal residual
  TensorF ix({h, w}), iy({h, w}), it({h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const float gx1 = (at_clamped(prev, h, w, y, x + 1) - at_clamped(prev, h, w, y, x - 1)) / 2;
      const float gx2 =
          (at_clamped(warped, h, w, y, x + 1) - at_clamped(warped, h, w, y, x - 1)) / 2;
      const float gy1 = (at_clamped(prev, h, w, y + 1, x) - at_clamped(prev, h, w, y - 1, x)) / 2;
      const float gy2 =
          (at_clamped(warped, h, w, y + 1, x) - at_clamped(warped, h, w, y - 1, x)) / 2;
      ix[y * w + x] = (gx1 + gx2) / 2;
      iy[y * w + x] = (gy1 + gy2) / 2;
      it[y * w + x] = warped[y * w + x] - prev[y * w + x];
    }

  TensorF du({h, w}), dv({h, w});
  TensorF du_next({h, w}), dv_next({h, w});
  const float a2 = static_cast<float>(p.alpha2);
  for (int iter = 0; iter < p.iterations; ++iter) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const float ubar = (at_clamped(du, h, w, y - 1, x) + at_clamped(du, h, w, y + 1, x) +
                            at_clamped(du, h, w, y, x - 1) + at_clamped(du, h, w, y, x + 1)) /
                           4;
        const float vbar = (at_clamped(dv, h, w, y - 1, x) + at_clamped(dv, h, w, y + 1, x) +
                            at_clamped(dv, h, w, y, x - 1) + at_clamped(dv, h, w, y, x + 1)) /
                           4;
        const float gx = ix[y * w + x], gy = iy[y * w + x];
        const float common = (gx * ubar + gy * vbar + it[y * w + x]) / (a2 + gx * gx + gy * gy);
        du_next[y * w + x] = ubar - gx * common;
        dv_next[y * w + x] = vbar - gy * common;
      }
    std::swap(du, du_next);
    std::swap(dv, dv_next);
  }
  for (std::int64_t i = 0; i < u.numel(); ++i) {
    u[i] += du[i];
    v[i] += dv[i];
  }
}

}  // namespace

TensorF estimate(const TensorF& prev, const TensorF& next, const Params& p) {
  if (prev.rank() != 2 || next.rank() != 2)
    throw ConfigError("flow wants (H, W) frames, got " + shape_str(prev.shape()) + " and " +
                      shape_str(next.shape()));
  if (prev.shape() != next.shape())
    throw ConfigError("flow frames disagree on shape: " + shape_str(prev.shape()) + " vs " +
                      shape_str(next.shape()));
  if (p.levels < 1 || p.iterations < 1 || p.alpha2 <= 0.0)
    throw ConfigError("flow parameters out of range");

  // 8-bit inputs rescale to unit range so the smoothness weight keeps its meaning
  TensorF a = prev, b = next;
  const float peak = std::max(a.max(), b.max());
  if (peak > 2.0f) {
    for (std::int64_t i = 0; i < a.numel(); ++i) a[i] /= 255.0f;
    for (std::int64_t i = 0; i < b.numel(); ++i) b[i] /= 255.0f;
  }

  // coarse-to-fine pyramid (half resolution per level, floor of 12 px)
  std::vector<TensorF> pa{a}, pb{b};
  for (int l = 1; l < p.levels; ++l) {
    const TensorF& top = pa.back();
    const int nh = top.dim(0) / 2, nw = top.dim(1) / 2;
    if (nh < 12 || nw < 12) break;
    pa.push_back(img::resize_bilinear(pa.back(), nh, nw));
    pb.push_back(img::resize_bilinear(pb.back(), nh, nw));
  }

  TensorF u({pa.back().dim(0), pa.back().dim(1)});
  TensorF v(u.shape());
  for (int l = static_cast<int>(pa.size()) - 1; l >= 0; --l) {
    if (l < static_cast<int>(pa.size()) - 1) {
      const int nh = pa[static_cast<std::size_t>(l)].dim(0);
      const int nw = pa[static_cast<std::size_t>(l)].dim(1);
      const float su = static_cast<float>(nw) / u.dim(1);
      const float sv = static_cast<float>(nh) / u.dim(0);
      u = img::resize_bilinear(u, nh, nw);
      v = img::resize_bilinear(v, nh, nw);
      for (std::int64_t i = 0; i < u.numel(); ++i) {
        u[i] *= su;
        v[i] *= sv;
      }
    }
    relax_level(pa[static_cast<std::size_t>(l)], pb[static_cast<std::size_t>(l)], u, v, p);
  }

  TensorF out({2, prev.dim(0), prev.dim(1)});
  const std::int64_t plane = out.numel() / 2;
  for (std::int64_t i = 0; i < plane; ++i) {
    out[i] = u[i];
    out[plane + i] = v[i];
  }
  return out;
}

}  // namespace gait::flow
