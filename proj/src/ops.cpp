#include "gait/ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <cstring>
#include <limits>

namespace gait::ops {

namespace {

template <typename S>
using MatRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using VecCol = Eigen::Matrix<S, Eigen::Dynamic, 1>;

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

/// Patch matrix is (K, P) row-major: row = (kh, kw, cin) flattened in weight
/// order, column = output position. Out-of-range taps read as zero.
template <typename S>
void im2col_2d(const Tensor<S>& x, int n, int KH, int KW, int sh, int sw, int ph, int pw,
               int OH, int OW, MatRM<S>& col) {
  const int C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::int64_t P = static_cast<std::int64_t>(OH) * OW;
  for (int kh = 0; kh < KH; ++kh)
    for (int kw = 0; kw < KW; ++kw)
      for (int c = 0; c < C; ++c) {
        const std::int64_t r = (static_cast<std::int64_t>(kh) * KW + kw) * C + c;
        S* dst = col.data() + r * P;
        const S* src = x.data() + (static_cast<std::int64_t>(n) * C + c) * H * W;
        for (int oh = 0; oh < OH; ++oh) {
          const int ih = oh * sh - ph + kh;
          if (ih < 0 || ih >= H) {
            std::fill(dst + static_cast<std::int64_t>(oh) * OW,
                      dst + static_cast<std::int64_t>(oh + 1) * OW, S(0));
            continue;
          }
          const S* row = src + static_cast<std::int64_t>(ih) * W;
          S* out = dst + static_cast<std::int64_t>(oh) * OW;
          for (int ow = 0; ow < OW; ++ow) {
            const int iw = ow * sw - pw + kw;
            out[ow] = (iw >= 0 && iw < W) ? row[iw] : S(0);
          }
        }
      }
}

template <typename S>
void col2im_2d(const MatRM<S>& dcol, int n, int KH, int KW, int sh, int sw, int ph, int pw,
               int OH, int OW, Tensor<S>& dx) {
  const int C = dx.dim(1), H = dx.dim(2), W = dx.dim(3);
  const std::int64_t P = static_cast<std::int64_t>(OH) * OW;
  for (int kh = 0; kh < KH; ++kh)
    for (int kw = 0; kw < KW; ++kw)
      for (int c = 0; c < C; ++c) {
        const std::int64_t r = (static_cast<std::int64_t>(kh) * KW + kw) * C + c;
        const S* src = dcol.data() + r * P;
        S* dst = dx.data() + (static_cast<std::int64_t>(n) * C + c) * H * W;
        for (int oh = 0; oh < OH; ++oh) {
          const int ih = oh * sh - ph + kh;
          if (ih < 0 || ih >= H) continue;
          S* row = dst + static_cast<std::int64_t>(ih) * W;
          const S* grad = src + static_cast<std::int64_t>(oh) * OW;
          for (int ow = 0; ow < OW; ++ow) {
            const int iw = ow * sw - pw + kw;
            if (iw >= 0 && iw < W) row[iw] += grad[ow];
          }
        }
      }
}

template <typename S>
void im2col_3d(const Tensor<S>& x, int n, int KT, int KH, int KW, int st, int sh, int sw,
               int pt, int ph, int pw, int OT, int OH, int OW, MatRM<S>& col) {
  const int C = x.dim(1), T = x.dim(2), H = x.dim(3), W = x.dim(4);
  const std::int64_t P = static_cast<std::int64_t>(OT) * OH * OW;
  for (int kt = 0; kt < KT; ++kt)
    for (int kh = 0; kh < KH; ++kh)
      for (int kw = 0; kw < KW; ++kw)
        for (int c = 0; c < C; ++c) {
          const std::int64_t r =
              ((static_cast<std::int64_t>(kt) * KH + kh) * KW + kw) * C + c;
          S* dst = col.data() + r * P;
          const S* src =
              x.data() + (static_cast<std::int64_t>(n) * C + c) * T * H * W;
          for (int ot = 0; ot < OT; ++ot) {
            const int it = ot * st - pt + kt;
            const bool t_ok = it >= 0 && it < T;
            for (int oh = 0; oh < OH; ++oh) {
              const int ih = oh * sh - ph + kh;
              S* out = dst + (static_cast<std::int64_t>(ot) * OH + oh) * OW;
              if (!t_ok || ih < 0 || ih >= H) {
                std::fill(out, out + OW, S(0));
                continue;
              }
              const S* row = src + (static_cast<std::int64_t>(it) * H + ih) * W;
              for (int ow = 0; ow < OW; ++ow) {
                const int iw = ow * sw - pw + kw;
                out[ow] = (iw >= 0 && iw < W) ? row[iw] : S(0);
              }
            }
          }
        }
}

template <typename S>
void col2im_3d(const MatRM<S>& dcol, int n, int KT, int KH, int KW, int st, int sh, int sw,
               int pt, int ph, int pw, int OT, int OH, int OW, Tensor<S>& dx) {
  const int C = dx.dim(1), T = dx.dim(2), H = dx.dim(3), W = dx.dim(4);
  const std::int64_t P = static_cast<std::int64_t>(OT) * OH * OW;
  for (int kt = 0; kt < KT; ++kt)
    for (int kh = 0; kh < KH; ++kh)
      for (int kw = 0; kw < KW; ++kw)
        for (int c = 0; c < C; ++c) {
          const std::int64_t r =
              ((static_cast<std::int64_t>(kt) * KH + kh) * KW + kw) * C + c;
          const S* src = dcol.data() + r * P;
          S* dst = dx.data() + (static_cast<std::int64_t>(n) * C + c) * T * H * W;
          for (int ot = 0; ot < OT; ++ot) {
            const int it = ot * st - pt + kt;
            if (it < 0 || it >= T) continue;
            for (int oh = 0; oh < OH; ++oh) {
              const int ih = oh * sh - ph + kh;
              if (ih < 0 || ih >= H) continue;
              S* row = dst + (static_cast<std::int64_t>(it) * H + ih) * W;
              const S* grad = src + (static_cast<std::int64_t>(ot) * OH + oh) * OW;
              for (int ow = 0; ow < OW; ++ow) {
                const int iw = ow * sw - pw + kw;
                if (iw >= 0 && iw < W) row[iw] += grad[ow];
              }
            }
          }
        }
}

}  // namespace

int conv_out_dim(int in, int k, int stride, int pad) {
  if (k < 1 || stride < 1 || pad < 0) throw ConfigError("bad conv geometry");
  const int span = in + 2 * pad - k;
  if (span < 0)
    throw ConfigError("kernel " + std::to_string(k) + " exceeds padded extent " +
                      std::to_string(in + 2 * pad));
  return span / stride + 1;
}

int pool_out_dim(int in, int k, int stride) {
  if (k < 1 || stride < 1) throw ConfigError("bad pool geometry");
  if (in < k)
    throw ConfigError("pool window " + std::to_string(k) + " exceeds input extent " +
                      std::to_string(in));
  return (in - k) / stride + 1;
}

template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b,
                 int sh, int sw, int ph, int pw) {
  require(x.rank() == 4, "conv2d input must be (N,C,H,W), got " + shape_str(x.shape()));
  require(w.rank() == 4, "conv2d weight must be (KH,KW,Cin,Cout), got " + shape_str(w.shape()));
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int KH = w.dim(0), KW = w.dim(1), F = w.dim(3);
  require(w.dim(2) == C, "conv2d channel mismatch: input " + std::to_string(C) + " vs weight " +
                             std::to_string(w.dim(2)));
  require(b.numel() == F, "conv2d bias length mismatch");
  const int OH = conv_out_dim(H, KH, sh, ph), OW = conv_out_dim(W, KW, sw, pw);
  const std::int64_t K = static_cast<std::int64_t>(KH) * KW * C;
  const std::int64_t P = static_cast<std::int64_t>(OH) * OW;

  Tensor<S> y({N, F, OH, OW});
  MatRM<S> col(K, P);
  Eigen::Map<const MatRM<S>> Wm(w.data(), K, F);
  Eigen::Map<const VecCol<S>> bv(b.data(), F);
  for (int n = 0; n < N; ++n) {
    im2col_2d(x, n, KH, KW, sh, sw, ph, pw, OH, OW, col);
    Eigen::Map<MatRM<S>> Ym(y.data() + static_cast<std::int64_t>(n) * F * P, F, P);
    Ym.noalias() = Wm.transpose() * col;
    Ym.colwise() += bv;
  }
  return y;
}

template <typename S>
void conv2d_grad(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& dy,
                 int sh, int sw, int ph, int pw,
                 Tensor<S>& dx, Tensor<S>& dw, Tensor<S>& db) {
  const int N = x.dim(0), C = x.dim(1);
  const int KH = w.dim(0), KW = w.dim(1), F = w.dim(3);
  const int OH = dy.dim(2), OW = dy.dim(3);
  const std::int64_t K = static_cast<std::int64_t>(KH) * KW * C;
  const std::int64_t P = static_cast<std::int64_t>(OH) * OW;

  dx = Tensor<S>(x.shape());
  dw = Tensor<S>(w.shape());
  db = Tensor<S>({F});
  MatRM<S> col(K, P), dcol(K, P);
  Eigen::Map<const MatRM<S>> Wm(w.data(), K, F);
  Eigen::Map<MatRM<S>> dWm(dw.data(), K, F);
  for (int n = 0; n < N; ++n) {
    im2col_2d(x, n, KH, KW, sh, sw, ph, pw, OH, OW, col);
    Eigen::Map<const MatRM<S>> dYm(dy.data() + static_cast<std::int64_t>(n) * F * P, F, P);
    dWm.noalias() += col * dYm.transpose();
    // fixed summation order: a vectorized redux would regroup terms by the
    // buffer's runtime alignment and break run-to-run reproducibility
    for (int f = 0; f < F; ++f) {
      const S* row = dy.data() + (static_cast<std::int64_t>(n) * F + f) * P;
      S acc = S(0);
      for (std::int64_t p = 0; p < P; ++p) acc += row[p];
      db[f] += acc;
    }
    dcol.noalias() = Wm * dYm;
    col2im_2d(dcol, n, KH, KW, sh, sw, ph, pw, OH, OW, dx);
  }
}

template <typename S>
Tensor<S> conv3d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b,
                 int st, int sh, int sw, int pt, int ph, int pw) {
  require(x.rank() == 5, "conv3d input must be (N,C,T,H,W), got " + shape_str(x.shape()));
  require(w.rank() == 5, "conv3d weight must be (KT,KH,KW,Cin,Cout), got " + shape_str(w.shape()));
  const int N = x.dim(0), C = x.dim(1), T = x.dim(2), H = x.dim(3), W = x.dim(4);
  const int KT = w.dim(0), KH = w.dim(1), KW = w.dim(2), F = w.dim(4);
  require(w.dim(3) == C, "conv3d channel mismatch");
  require(b.numel() == F, "conv3d bias length mismatch");
  const int OT = conv_out_dim(T, KT, st, pt);
  const int OH = conv_out_dim(H, KH, sh, ph), OW = conv_out_dim(W, KW, sw, pw);
  const std::int64_t K = static_cast<std::int64_t>(KT) * KH * KW * C;
  const std::int64_t P = static_cast<std::int64_t>(OT) * OH * OW;

  Tensor<S> y({N, F, OT, OH, OW});
  MatRM<S> col(K, P);
  Eigen::Map<const MatRM<S>> Wm(w.data(), K, F);
  Eigen::Map<const VecCol<S>> bv(b.data(), F);
  for (int n = 0; n < N; ++n) {
    im2col_3d(x, n, KT, KH, KW, st, sh, sw, pt, ph, pw, OT, OH, OW, col);
    Eigen::Map<MatRM<S>> Ym(y.data() + static_cast<std::int64_t>(n) * F * P, F, P);
    Ym.noalias() = Wm.transpose() * col;
    Ym.colwise() += bv;
  }
  return y;
}

template <typename S>
void conv3d_grad(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& dy,
                 int st, int sh, int sw, int pt, int ph, int pw,
                 Tensor<S>& dx, Tensor<S>& dw, Tensor<S>& db) {
  const int N = x.dim(0), C = x.dim(1);
  const int KT = w.dim(0), KH = w.dim(1), KW = w.dim(2), F = w.dim(4);
  const int OT = dy.dim(2), OH = dy.dim(3), OW = dy.dim(4);
  const std::int64_t K = static_cast<std::int64_t>(KT) * KH * KW * C;
  const std::int64_t P = static_cast<std::int64_t>(OT) * OH * OW;

  dx = Tensor<S>(x.shape());
  dw = Tensor<S>(w.shape());
  db = Tensor<S>({F});
  MatRM<S> col(K, P), dcol(K, P);
  Eigen::Map<const MatRM<S>> Wm(w.data(), K, F);
  Eigen::Map<MatRM<S>> dWm(dw.data(), K, F);
  for (int n = 0; n < N; ++n) {
    im2col_3d(x, n, KT, KH, KW, st, sh, sw, pt, ph, pw, OT, OH, OW, col);
    Eigen::Map<const MatRM<S>> dYm(dy.data() + static_cast<std::int64_t>(n) * F * P, F, P);
    dWm.noalias() += col * dYm.transpose();
    // fixed summation order, as in conv2d_grad
    for (int f = 0; f < F; ++f) {
      const S* row = dy.data() + (static_cast<std::int64_t>(n) * F + f) * P;
      S acc = S(0);
      for (std::int64_t p = 0; p < P; ++p) acc += row[p];
      db[f] += acc;
    }
    dcol.noalias() = Wm * dYm;
    col2im_3d(dcol, n, KT, KH, KW, st, sh, sw, pt, ph, pw, OT, OH, OW, dx);
  }
}

template <typename S>
Tensor<S> maxpool2d(const Tensor<S>& x, int kh, int kw, int sh, int sw, Tensor<int>& argmax) {
  require(x.rank() == 4, "maxpool2d input must be (N,C,H,W)");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int OH = pool_out_dim(H, kh, sh), OW = pool_out_dim(W, kw, sw);
  Tensor<S> y({N, C, OH, OW});
  argmax = Tensor<int>({N, C, OH, OW});
  std::int64_t o = 0;
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const std::int64_t base = (static_cast<std::int64_t>(n) * C + c) * H * W;
      for (int oh = 0; oh < OH; ++oh)
        for (int ow = 0; ow < OW; ++ow, ++o) {
          S best = -std::numeric_limits<S>::infinity();
          std::int64_t best_ix = -1;
          for (int i = 0; i < kh; ++i)
            for (int j = 0; j < kw; ++j) {
              const std::int64_t ix = base + static_cast<std::int64_t>(oh * sh + i) * W +
                                      (ow * sw + j);
              if (x[ix] > best) {
                best = x[ix];
                best_ix = ix;
              }
            }
          y[o] = best;
          argmax[o] = static_cast<int>(best_ix);
        }
    }
  return y;
}

template <typename S>
Tensor<S> maxpool2d_grad(const Tensor<S>& dy, const Tensor<int>& argmax, const Shape& xshape) {
  Tensor<S> dx(xshape);
  for (std::int64_t i = 0; i < dy.numel(); ++i) dx[argmax[i]] += dy[i];
  return dx;
}

template <typename S>
Tensor<S> maxpool3d(const Tensor<S>& x, int kt, int kh, int kw, int st, int sh, int sw,
                    Tensor<int>& argmax) {
  require(x.rank() == 5, "maxpool3d input must be (N,C,T,H,W)");
  const int N = x.dim(0), C = x.dim(1), T = x.dim(2), H = x.dim(3), W = x.dim(4);
  const int OT = pool_out_dim(T, kt, st);
  const int OH = pool_out_dim(H, kh, sh), OW = pool_out_dim(W, kw, sw);
  Tensor<S> y({N, C, OT, OH, OW});
  argmax = Tensor<int>({N, C, OT, OH, OW});
  std::int64_t o = 0;
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const std::int64_t base = (static_cast<std::int64_t>(n) * C + c) * T * H * W;
      for (int ot = 0; ot < OT; ++ot)
        for (int oh = 0; oh < OH; ++oh)
          for (int ow = 0; ow < OW; ++ow, ++o) {
            S best = -std::numeric_limits<S>::infinity();
            std::int64_t best_ix = -1;
            for (int t = 0; t < kt; ++t)
              for (int i = 0; i < kh; ++i)
                for (int j = 0; j < kw; ++j) {
                  const std::int64_t ix =
                      base + (static_cast<std::int64_t>(ot * st + t) * H + (oh * sh + i)) * W +
                      (ow * sw + j);
                  if (x[ix] > best) {
                    best = x[ix];
                    best_ix = ix;
                  }
                }
            y[o] = best;
            argmax[o] = static_cast<int>(best_ix);
          }
    }
  return y;
}

template <typename S>
Tensor<S> maxpool3d_grad(const Tensor<S>& dy, const Tensor<int>& argmax, const Shape& xshape) {
  Tensor<S> dx(xshape);
  for (std::int64_t i = 0; i < dy.numel(); ++i) dx[argmax[i]] += dy[i];
  return dx;
}

template <typename S>
Tensor<S> avgpool2d(const Tensor<S>& x, int kh, int kw, int sh, int sw) {
  require(x.rank() == 4, "avgpool2d input must be (N,C,H,W)");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int OH = pool_out_dim(H, kh, sh), OW = pool_out_dim(W, kw, sw);
  const S inv = S(1) / static_cast<S>(kh * kw);
  Tensor<S> y({N, C, OH, OW});
  std::int64_t o = 0;
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const S* plane = x.data() + (static_cast<std::int64_t>(n) * C + c) * H * W;
      for (int oh = 0; oh < OH; ++oh)
        for (int ow = 0; ow < OW; ++ow, ++o) {
          S acc = S(0);
          for (int i = 0; i < kh; ++i) {
            const S* row = plane + static_cast<std::int64_t>(oh * sh + i) * W + ow * sw;
            for (int j = 0; j < kw; ++j) acc += row[j];
          }
          y[o] = acc * inv;
        }
    }
  return y;
}

template <typename S>
Tensor<S> avgpool2d_grad(const Tensor<S>& dy, const Shape& xshape, int kh, int kw, int sh,
                         int sw) {
  const int N = xshape[0], C = xshape[1], H = xshape[2], W = xshape[3];
  const int OH = dy.dim(2), OW = dy.dim(3);
  const S inv = S(1) / static_cast<S>(kh * kw);
  Tensor<S> dx(xshape);
  std::int64_t o = 0;
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      S* plane = dx.data() + (static_cast<std::int64_t>(n) * C + c) * H * W;
      for (int oh = 0; oh < OH; ++oh)
        for (int ow = 0; ow < OW; ++ow, ++o) {
          const S g = dy[o] * inv;
          for (int i = 0; i < kh; ++i) {
            S* row = plane + static_cast<std::int64_t>(oh * sh + i) * W + ow * sw;
            for (int j = 0; j < kw; ++j) row[j] += g;
          }
        }
    }
  return dx;
}

template <typename S>
Tensor<S> lrn(const Tensor<S>& x, int size, double alpha, double beta, double k) {
  require(x.rank() == 4, "lrn input must be (N,C,H,W)");
  require(size >= 1 && size % 2 == 1, "lrn size must be odd");
  const int N = x.dim(0), C = x.dim(1);
  const std::int64_t M = static_cast<std::int64_t>(x.dim(2)) * x.dim(3);
  const int half = size / 2;
  Tensor<S> y(x.shape());
  for (int n = 0; n < N; ++n)
    for (std::int64_t m = 0; m < M; ++m) {
      const std::int64_t base = static_cast<std::int64_t>(n) * C * M + m;
      for (int c = 0; c < C; ++c) {
        double s = k;
        const int lo = std::max(0, c - half), hi = std::min(C - 1, c + half);
        for (int j = lo; j <= hi; ++j) {
          const double v = static_cast<double>(x[base + static_cast<std::int64_t>(j) * M]);
          s += alpha * v * v;
        }
        const std::int64_t ix = base + static_cast<std::int64_t>(c) * M;
        y[ix] = static_cast<S>(static_cast<double>(x[ix]) * std::pow(s, -beta));
      }
    }
  return y;
}

template <typename S>
Tensor<S> lrn_grad(const Tensor<S>& x, const Tensor<S>& dy, int size, double alpha, double beta,
                   double k) {
  const int N = x.dim(0), C = x.dim(1);
  const std::int64_t M = static_cast<std::int64_t>(x.dim(2)) * x.dim(3);
  const int half = size / 2;
  Tensor<S> dx(x.shape());
  std::vector<double> s(static_cast<std::size_t>(C));
  for (int n = 0; n < N; ++n)
    for (std::int64_t m = 0; m < M; ++m) {
      const std::int64_t base = static_cast<std::int64_t>(n) * C * M + m;
      for (int c = 0; c < C; ++c) {
        double acc = k;
        const int lo = std::max(0, c - half), hi = std::min(C - 1, c + half);
        for (int j = lo; j <= hi; ++j) {
          const double v = static_cast<double>(x[base + static_cast<std::int64_t>(j) * M]);
          acc += alpha * v * v;
        }
        s[static_cast<std::size_t>(c)] = acc;
      }
      // dx_j = dy_j*s_j^-b - 2ab*x_j * sum_{c: |c-j|<=half} dy_c*x_c*s_c^(-b-1)
      for (int j = 0; j < C; ++j) {
        const std::int64_t jx = base + static_cast<std::int64_t>(j) * M;
        double g = static_cast<double>(dy[jx]) * std::pow(s[static_cast<std::size_t>(j)], -beta);
        const int lo = std::max(0, j - half), hi = std::min(C - 1, j + half);
        double cross = 0.0;
        for (int c = lo; c <= hi; ++c) {
          const std::int64_t cx = base + static_cast<std::int64_t>(c) * M;
          cross += static_cast<double>(dy[cx]) * static_cast<double>(x[cx]) *
                   std::pow(s[static_cast<std::size_t>(c)], -beta - 1.0);
        }
        g -= 2.0 * alpha * beta * static_cast<double>(x[jx]) * cross;
        dx[jx] = static_cast<S>(g);
      }
    }
  return dx;
}

namespace {

/// Views a rank >= 2 tensor as (N, C, M) with C = axis 1.
struct NCM {
  int n, c;
  std::int64_t m;
};

NCM ncm_view(const Shape& s) {
  if (s.size() < 2) throw ConfigError("batch-norm input must have rank >= 2");
  std::int64_t m = 1;
  for (std::size_t i = 2; i < s.size(); ++i) m *= s[i];
  return {s[0], s[1], m};
}

}  // namespace

template <typename S>
Tensor<S> batchnorm_train(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                          Tensor<S>& run_mean, Tensor<S>& run_var, double momentum, double eps,
                          Tensor<S>& save_mean, Tensor<S>& save_inv_std) {
  const NCM v = ncm_view(x.shape());
  require(gamma.numel() == v.c && beta.numel() == v.c, "batch-norm parameter length mismatch");
  require(run_mean.numel() == v.c && run_var.numel() == v.c, "batch-norm running stats mismatch");
  require(v.n >= 2, "batch-norm training needs batch size >= 2, got " + std::to_string(v.n));
  const double count = static_cast<double>(v.n) * static_cast<double>(v.m);

  save_mean = Tensor<S>({v.c});
  save_inv_std = Tensor<S>({v.c});
  Tensor<S> y(x.shape());
  for (int c = 0; c < v.c; ++c) {
    double mu = 0.0;
    for (int n = 0; n < v.n; ++n) {
      const S* p = x.data() + (static_cast<std::int64_t>(n) * v.c + c) * v.m;
      for (std::int64_t i = 0; i < v.m; ++i) mu += static_cast<double>(p[i]);
    }
    mu /= count;
    double var = 0.0;
    for (int n = 0; n < v.n; ++n) {
      const S* p = x.data() + (static_cast<std::int64_t>(n) * v.c + c) * v.m;
      for (std::int64_t i = 0; i < v.m; ++i) {
        const double d = static_cast<double>(p[i]) - mu;
        var += d * d;
      }
    }
    var /= count;
    const double istd = 1.0 / std::sqrt(var + eps);
    save_mean[c] = static_cast<S>(mu);
    save_inv_std[c] = static_cast<S>(istd);
    run_mean[c] = static_cast<S>(momentum * static_cast<double>(run_mean[c]) +
                                 (1.0 - momentum) * mu);
    run_var[c] = static_cast<S>(momentum * static_cast<double>(run_var[c]) +
                                (1.0 - momentum) * var);
    const double g = static_cast<double>(gamma[c]), b = static_cast<double>(beta[c]);
    for (int n = 0; n < v.n; ++n) {
      const S* p = x.data() + (static_cast<std::int64_t>(n) * v.c + c) * v.m;
      S* q = y.data() + (static_cast<std::int64_t>(n) * v.c + c) * v.m;
      for (std::int64_t i = 0; i < v.m; ++i)
        q[i] = static_cast<S>((static_cast<double>(p[i]) - mu) * istd * g + b);
    }
  }
  return y;
}

template <typename S>
Tensor<S> batchnorm_eval(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                         const Tensor<S>& run_mean, const Tensor<S>& run_var, double eps) {
  const NCM v = ncm_view(x.shape());
  require(gamma.numel() == v.c && beta.numel() == v.c, "batch-norm parameter length mismatch");
  Tensor<S> y(x.shape());
  for (int c = 0; c < v.c; ++c) {
    const double mu = static_cast<double>(run_mean[c]);
    const double istd = 1.0 / std::sqrt(static_cast<double>(run_var[c]) + eps);
    const double g = static_cast<double>(gamma[c]), b = static_cast<double>(beta[c]);
    for (int n = 0; n < v.n; ++n) {
      const S* p = x.data() + (static_cast<std::int64_t>(n) * v.c + c) * v.m;
      S* q = y.data() + (static_cast<std::int64_t>(n) * v.c + c) * v.m;
      for (std::int64_t i = 0; i < v.m; ++i)
        q[i] = static_cast<S>((static_cast<double>(p[i]) - mu) * istd * g + b);
    }
  }
  return y;
}

template <typename S>
void batchnorm_grad(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& dy,
                    const Tensor<S>& save_mean, const Tensor<S>& save_inv_std,
                    Tensor<S>& dx, Tensor<S>& dgamma, Tensor<S>& dbeta) {
  const NCM v = ncm_view(x.shape());
  const double count = static_cast<double>(v.n) * static_cast<double>(v.m);
  dx = Tensor<S>(x.shape());
  dgamma = Tensor<S>({v.c});
  dbeta = Tensor<S>({v.c});
  for (int c = 0; c < v.c; ++c) {
    const double mu = static_cast<double>(save_mean[c]);
    const double istd = static_cast<double>(save_inv_std[c]);
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int n = 0; n < v.n; ++n) {
      const S* px = x.data() + (static_cast<std::int64_t>(n) * v.c + c) * v.m;
      const S* pd = dy.data() + (static_cast<std::int64_t>(n) * v.c + c) * v.m;
      for (std::int64_t i = 0; i < v.m; ++i) {
        const double xhat = (static_cast<double>(px[i]) - mu) * istd;
        sum_dy += static_cast<double>(pd[i]);
        sum_dy_xhat += static_cast<double>(pd[i]) * xhat;
      }
    }
    dgamma[c] = static_cast<S>(sum_dy_xhat);
    dbeta[c] = static_cast<S>(sum_dy);
    const double g = static_cast<double>(gamma[c]);
    const double mean_dy = sum_dy / count;
    const double mean_dy_xhat = sum_dy_xhat / count;
    for (int n = 0; n < v.n; ++n) {
      const S* px = x.data() + (static_cast<std::int64_t>(n) * v.c + c) * v.m;
      const S* pd = dy.data() + (static_cast<std::int64_t>(n) * v.c + c) * v.m;
      S* pq = dx.data() + (static_cast<std::int64_t>(n) * v.c + c) * v.m;
      for (std::int64_t i = 0; i < v.m; ++i) {
        const double xhat = (static_cast<double>(px[i]) - mu) * istd;
        pq[i] = static_cast<S>(g * istd *
                               (static_cast<double>(pd[i]) - mean_dy - xhat * mean_dy_xhat));
      }
    }
  }
}

template <typename S>
Tensor<S> fully_connected(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
  require(x.rank() == 2, "fully-connected input must be (N,D)");
  require(w.rank() == 2, "fully-connected weight must be (D,U)");
  const int N = x.dim(0), D = x.dim(1), U = w.dim(1);
  require(w.dim(0) == D, "fully-connected width mismatch: input " + std::to_string(D) +
                             " vs weight " + std::to_string(w.dim(0)));
  require(b.numel() == U, "fully-connected bias length mismatch");
  Tensor<S> y({N, U});
  Eigen::Map<const MatRM<S>> Xm(x.data(), N, D);
  Eigen::Map<const MatRM<S>> Wm(w.data(), D, U);
  Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>> bv(b.data(), U);
  Eigen::Map<MatRM<S>> Ym(y.data(), N, U);
  Ym.noalias() = Xm * Wm;
  Ym.rowwise() += bv;
  return y;
}

template <typename S>
void fully_connected_grad(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& dy,
                          Tensor<S>& dx, Tensor<S>& dw, Tensor<S>& db) {
  const int N = x.dim(0), D = x.dim(1), U = w.dim(1);
  dx = Tensor<S>(x.shape());
  dw = Tensor<S>(w.shape());
  db = Tensor<S>({U});
  Eigen::Map<const MatRM<S>> Xm(x.data(), N, D);
  Eigen::Map<const MatRM<S>> Wm(w.data(), D, U);
  Eigen::Map<const MatRM<S>> dYm(dy.data(), N, U);
  Eigen::Map<MatRM<S>> dXm(dx.data(), N, D);
  Eigen::Map<MatRM<S>> dWm(dw.data(), D, U);
  Eigen::Map<VecCol<S>> dbv(db.data(), U);
  dXm.noalias() = dYm * Wm.transpose();
  dWm.noalias() = Xm.transpose() * dYm;
  dbv = dYm.colwise().sum().transpose();
}

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
  Tensor<S> y(x.shape());
  for (std::int64_t i = 0; i < x.numel(); ++i) y[i] = x[i] > S(0) ? x[i] : S(0);
  return y;
}

template <typename S>
Tensor<S> relu_grad(const Tensor<S>& x, const Tensor<S>& dy) {
  Tensor<S> dx(x.shape());
  for (std::int64_t i = 0; i < x.numel(); ++i) dx[i] = x[i] > S(0) ? dy[i] : S(0);
  return dx;
}

template <typename S>
Tensor<S> dropout_train(const Tensor<S>& x, double rate, Rng& rng, Tensor<S>& mask) {
  require(rate >= 0.0 && rate < 1.0, "dropout rate must be in [0,1)");
  mask = Tensor<S>(x.shape());
  Tensor<S> y(x.shape());
  const S keep_scale = static_cast<S>(1.0 / (1.0 - rate));
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    const S m = rng.next_unit() < rate ? S(0) : keep_scale;
    mask[i] = m;
    y[i] = x[i] * m;
  }
  return y;
}

template <typename S>
Tensor<S> dropout_grad(const Tensor<S>& dy, const Tensor<S>& mask) {
  Tensor<S> dx(dy.shape());
  for (std::int64_t i = 0; i < dy.numel(); ++i) dx[i] = dy[i] * mask[i];
  return dx;
}

template <typename S>
Tensor<S> softmax(const Tensor<S>& x) {
  require(x.rank() == 2, "softmax input must be (N,C)");
  const int N = x.dim(0), C = x.dim(1);
  Tensor<S> y(x.shape());
  for (int n = 0; n < N; ++n) {
    const S* row = x.data() + static_cast<std::int64_t>(n) * C;
    S* out = y.data() + static_cast<std::int64_t>(n) * C;
    double mx = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < C; ++c) mx = std::max(mx, static_cast<double>(row[c]));
    double z = 0.0;
    for (int c = 0; c < C; ++c) z += std::exp(static_cast<double>(row[c]) - mx);
    for (int c = 0; c < C; ++c)
      out[c] = static_cast<S>(std::exp(static_cast<double>(row[c]) - mx) / z);
  }
  return y;
}

template <typename S>
Tensor<S> softmax_grad(const Tensor<S>& y, const Tensor<S>& dy) {
  const int N = y.dim(0), C = y.dim(1);
  Tensor<S> dx(y.shape());
  for (int n = 0; n < N; ++n) {
    const S* p = y.data() + static_cast<std::int64_t>(n) * C;
    const S* g = dy.data() + static_cast<std::int64_t>(n) * C;
    S* out = dx.data() + static_cast<std::int64_t>(n) * C;
    double dot = 0.0;
    for (int c = 0; c < C; ++c) dot += static_cast<double>(p[c]) * static_cast<double>(g[c]);
    for (int c = 0; c < C; ++c)
      out[c] = static_cast<S>(static_cast<double>(p[c]) * (static_cast<double>(g[c]) - dot));
  }
  return dx;
}

template <typename S>
double softmax_cross_entropy(const Tensor<S>& logits, const std::vector<int>& labels,
                             Tensor<S>* dlogits) {
  require(logits.rank() == 2, "cross-entropy logits must be (N,C)");
  const int N = logits.dim(0), C = logits.dim(1);
  require(static_cast<int>(labels.size()) == N, "label count mismatch");
  if (dlogits) *dlogits = Tensor<S>(logits.shape());
  double loss = 0.0;
  for (int n = 0; n < N; ++n) {
    const int t = labels[static_cast<std::size_t>(n)];
    require(t >= 0 && t < C, "label " + std::to_string(t) + " out of range for " +
                                 std::to_string(C) + " classes");
    const S* row = logits.data() + static_cast<std::int64_t>(n) * C;
    double mx = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < C; ++c) mx = std::max(mx, static_cast<double>(row[c]));
    double z = 0.0;
    for (int c = 0; c < C; ++c) z += std::exp(static_cast<double>(row[c]) - mx);
    const double logz = std::log(z) + mx;
    loss += logz - static_cast<double>(row[t]);
    if (dlogits) {
      S* g = dlogits->data() + static_cast<std::int64_t>(n) * C;
      for (int c = 0; c < C; ++c) {
        const double p = std::exp(static_cast<double>(row[c]) - logz);
        g[c] = static_cast<S>((p - (c == t ? 1.0 : 0.0)) / N);
      }
    }
  }
  return loss / N;
}

template <typename S>
Tensor<S> concat_axis1(const std::vector<const Tensor<S>*>& xs) {
  require(!xs.empty(), "concat of zero inputs");
  const Shape& first = xs[0]->shape();
  require(first.size() >= 2, "concat inputs must have rank >= 2");
  int total_c = 0;
  for (const auto* x : xs) {
    require(x->rank() == static_cast<int>(first.size()), "concat rank mismatch");
    for (std::size_t d = 0; d < first.size(); ++d)
      if (d != 1)
        require(x->shape()[d] == first[d], "concat dimension mismatch at axis " +
                                               std::to_string(d) + ": " + shape_str(x->shape()) +
                                               " vs " + shape_str(first));
    total_c += x->dim(1);
  }
  Shape oshape = first;
  oshape[1] = total_c;
  Tensor<S> y(oshape);
  const int N = first[0];
  std::int64_t m = 1;
  for (std::size_t d = 2; d < first.size(); ++d) m *= first[d];
  const std::int64_t orow = static_cast<std::int64_t>(total_c) * m;
  for (int n = 0; n < N; ++n) {
    std::int64_t off = 0;
    for (const auto* x : xs) {
      const std::int64_t block = static_cast<std::int64_t>(x->dim(1)) * m;
      std::memcpy(y.data() + n * orow + off, x->data() + n * block,
                  static_cast<std::size_t>(block) * sizeof(S));
      off += block;
    }
  }
  return y;
}

template <typename S>
std::vector<Tensor<S>> concat_axis1_grad(const Tensor<S>& dy, const std::vector<Shape>& xshapes) {
  std::vector<Tensor<S>> grads;
  grads.reserve(xshapes.size());
  const int N = dy.dim(0);
  std::int64_t m = 1;
  for (std::size_t d = 2; d < dy.shape().size(); ++d) m *= dy.shape()[d];
  const std::int64_t orow = static_cast<std::int64_t>(dy.dim(1)) * m;
  std::int64_t off = 0;
  for (const Shape& s : xshapes) {
    Tensor<S> g(s);
    const std::int64_t block = static_cast<std::int64_t>(s[1]) * m;
    for (int n = 0; n < N; ++n)
      std::memcpy(g.data() + n * block, dy.data() + n * orow + off,
                  static_cast<std::size_t>(block) * sizeof(S));
    off += block;
    grads.push_back(std::move(g));
  }
  return grads;
}

template <typename S>
Tensor<S> take_channels(const Tensor<S>& x, int start, int step, int count) {
  require(x.rank() >= 2, "channel selection needs rank >= 2");
  const int C = x.dim(1);
  require(step >= 1 && start >= 0 && count >= 1, "bad channel selection");
  require(start + (count - 1) * step < C, "channel selection exceeds " + std::to_string(C));
  Shape oshape = x.shape();
  oshape[1] = count;
  Tensor<S> y(oshape);
  const int N = x.dim(0);
  std::int64_t m = 1;
  for (std::size_t d = 2; d < x.shape().size(); ++d) m *= x.shape()[d];
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < count; ++c)
      std::memcpy(y.data() + (static_cast<std::int64_t>(n) * count + c) * m,
                  x.data() + (static_cast<std::int64_t>(n) * C + start + c * step) * m,
                  static_cast<std::size_t>(m) * sizeof(S));
  return y;
}

template <typename S>
Tensor<S> take_channels_grad(const Tensor<S>& dy, const Shape& xshape, int start, int step,
                             int count) {
  Tensor<S> dx(xshape);
  const int N = xshape[0], C = xshape[1];
  std::int64_t m = 1;
  for (std::size_t d = 2; d < xshape.size(); ++d) m *= xshape[d];
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < count; ++c)
      std::memcpy(dx.data() + (static_cast<std::int64_t>(n) * C + start + c * step) * m,
                  dy.data() + (static_cast<std::int64_t>(n) * count + c) * m,
                  static_cast<std::size_t>(m) * sizeof(S));
  return dx;
}

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  require(a.shape() == b.shape(), "elementwise add shape mismatch: " + shape_str(a.shape()) +
                                      " vs " + shape_str(b.shape()));
  Tensor<S> y(a.shape());
  for (std::int64_t i = 0; i < a.numel(); ++i) y[i] = a[i] + b[i];
  return y;
}

#define GAIT_INSTANTIATE_OPS(S)                                                                   \
  template Tensor<S> conv2d<S>(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, int, int,    \
                               int, int);                                                         \
  template void conv2d_grad<S>(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, int, int,    \
                               int, int, Tensor<S>&, Tensor<S>&, Tensor<S>&);                     \
  template Tensor<S> conv3d<S>(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, int, int,    \
                               int, int, int, int);                                               \
  template void conv3d_grad<S>(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, int, int,    \
                               int, int, int, int, Tensor<S>&, Tensor<S>&, Tensor<S>&);           \
  template Tensor<S> maxpool2d<S>(const Tensor<S>&, int, int, int, int, Tensor<int>&);            \
  template Tensor<S> maxpool2d_grad<S>(const Tensor<S>&, const Tensor<int>&, const Shape&);       \
  template Tensor<S> maxpool3d<S>(const Tensor<S>&, int, int, int, int, int, int, Tensor<int>&);  \
  template Tensor<S> maxpool3d_grad<S>(const Tensor<S>&, const Tensor<int>&, const Shape&);       \
  template Tensor<S> avgpool2d<S>(const Tensor<S>&, int, int, int, int);                          \
  template Tensor<S> avgpool2d_grad<S>(const Tensor<S>&, const Shape&, int, int, int, int);       \
  template Tensor<S> lrn<S>(const Tensor<S>&, int, double, double, double);                       \
  template Tensor<S> lrn_grad<S>(const Tensor<S>&, const Tensor<S>&, int, double, double,         \
                                 double);                                                         \
  template Tensor<S> batchnorm_train<S>(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&,     \
                                        Tensor<S>&, Tensor<S>&, double, double, Tensor<S>&,       \
                                        Tensor<S>&);                                              \
  template Tensor<S> batchnorm_eval<S>(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&,      \
                                       const Tensor<S>&, const Tensor<S>&, double);               \
  template void batchnorm_grad<S>(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&,           \
                                  const Tensor<S>&, const Tensor<S>&, Tensor<S>&, Tensor<S>&,     \
                                  Tensor<S>&);                                                    \
  template Tensor<S> fully_connected<S>(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);    \
  template void fully_connected_grad<S>(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&,     \
                                        Tensor<S>&, Tensor<S>&, Tensor<S>&);                      \
  template Tensor<S> relu<S>(const Tensor<S>&);                                                   \
  template Tensor<S> relu_grad<S>(const Tensor<S>&, const Tensor<S>&);                            \
  template Tensor<S> dropout_train<S>(const Tensor<S>&, double, Rng&, Tensor<S>&);                \
  template Tensor<S> dropout_grad<S>(const Tensor<S>&, const Tensor<S>&);                         \
  template Tensor<S> softmax<S>(const Tensor<S>&);                                                \
  template Tensor<S> softmax_grad<S>(const Tensor<S>&, const Tensor<S>&);                         \
  template double softmax_cross_entropy<S>(const Tensor<S>&, const std::vector<int>&,             \
                                           Tensor<S>*);                                           \
  template Tensor<S> concat_axis1<S>(const std::vector<const Tensor<S>*>&);                       \
  template std::vector<Tensor<S>> concat_axis1_grad<S>(const Tensor<S>&,                          \
                                                       const std::vector<Shape>&);                \
  template Tensor<S> take_channels<S>(const Tensor<S>&, int, int, int);                           \
  template Tensor<S> take_channels_grad<S>(const Tensor<S>&, const Shape&, int, int, int);        \
  template Tensor<S> add<S>(const Tensor<S>&, const Tensor<S>&);

GAIT_INSTANTIATE_OPS(float)
GAIT_INSTANTIATE_OPS(double)

#undef GAIT_INSTANTIATE_OPS

}  // namespace gait::ops
