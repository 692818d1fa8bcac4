#pragma once

#include <vector>

#include "gait/rng.hpp"
#include "gait/tensor.hpp"

/// Numeric kernels. Every forward op has an analytic gradient counterpart;
/// gradients are validated against central finite differences in the tests.
///
/// Layout conventions (row-major throughout):
///   2D activations  (N, C, H, W)
///   3D activations  (N, C, T, H, W)
///   conv2d weights  (KH, KW, Cin, Cout)   - im2col-ready
///   conv3d weights  (KT, KH, KW, Cin, Cout)
///   FC weights      (D, U)
namespace gait::ops {

/// floor((in + 2*pad - k) / stride) + 1; throws ConfigError when < 1.
int conv_out_dim(int in, int k, int stride, int pad);
/// floor((in - k) / stride) + 1 (pooling never pads; partial windows drop).
int pool_out_dim(int in, int k, int stride);

template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b,
                 int sh, int sw, int ph, int pw);
template <typename S>
void conv2d_grad(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& dy,
                 int sh, int sw, int ph, int pw,
                 Tensor<S>& dx, Tensor<S>& dw, Tensor<S>& db);

template <typename S>
Tensor<S> conv3d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b,
                 int st, int sh, int sw, int pt, int ph, int pw);
template <typename S>
void conv3d_grad(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& dy,
                 int st, int sh, int sw, int pt, int ph, int pw,
                 Tensor<S>& dx, Tensor<S>& dw, Tensor<S>& db);

/// argmax receives the flat input offset of each window maximum (first hit
/// wins on ties, scan order row-major), which makes the backward a scatter.
template <typename S>
Tensor<S> maxpool2d(const Tensor<S>& x, int kh, int kw, int sh, int sw, Tensor<int>& argmax);
template <typename S>
Tensor<S> maxpool2d_grad(const Tensor<S>& dy, const Tensor<int>& argmax, const Shape& xshape);

template <typename S>
Tensor<S> maxpool3d(const Tensor<S>& x, int kt, int kh, int kw, int st, int sh, int sw,
                    Tensor<int>& argmax);
template <typename S>
Tensor<S> maxpool3d_grad(const Tensor<S>& dy, const Tensor<int>& argmax, const Shape& xshape);

template <typename S>
Tensor<S> avgpool2d(const Tensor<S>& x, int kh, int kw, int sh, int sw);
template <typename S>
Tensor<S> avgpool2d_grad(const Tensor<S>& dy, const Shape& xshape, int kh, int kw, int sh, int sw);

/// Cross-channel response normalization: y_c = x_c / (k + a*sum x_j^2)^beta,
/// the sum running over the `size` channels centred on c (clipped at edges).
template <typename S>
Tensor<S> lrn(const Tensor<S>& x, int size, double alpha, double beta, double k);
template <typename S>
Tensor<S> lrn_grad(const Tensor<S>& x, const Tensor<S>& dy, int size, double alpha, double beta,
                   double k);

/// Batch statistics are biased (divide by count); running stats store the
/// same convention so eval normalization matches what training tracked.
template <typename S>
Tensor<S> batchnorm_train(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                          Tensor<S>& run_mean, Tensor<S>& run_var, double momentum, double eps,
                          Tensor<S>& save_mean, Tensor<S>& save_inv_std);
template <typename S>
Tensor<S> batchnorm_eval(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                         const Tensor<S>& run_mean, const Tensor<S>& run_var, double eps);
template <typename S>
void batchnorm_grad(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& dy,
                    const Tensor<S>& save_mean, const Tensor<S>& save_inv_std,
                    Tensor<S>& dx, Tensor<S>& dgamma, Tensor<S>& dbeta);

template <typename S>
Tensor<S> fully_connected(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b);
template <typename S>
void fully_connected_grad(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& dy,
                          Tensor<S>& dx, Tensor<S>& dw, Tensor<S>& db);

template <typename S>
Tensor<S> relu(const Tensor<S>& x);
template <typename S>
Tensor<S> relu_grad(const Tensor<S>& x, const Tensor<S>& dy);

/// Inverted dropout: mask entries are 0 or 1/(1-rate), so eval needs no
/// rescaling. rate must lie in [0, 1).
template <typename S>
Tensor<S> dropout_train(const Tensor<S>& x, double rate, Rng& rng, Tensor<S>& mask);
template <typename S>
Tensor<S> dropout_grad(const Tensor<S>& dy, const Tensor<S>& mask);

/// Row-wise softmax over (N, C) with max-shift stabilization.
template <typename S>
Tensor<S> softmax(const Tensor<S>& x);
template <typename S>
Tensor<S> softmax_grad(const Tensor<S>& y, const Tensor<S>& dy);

/// Mean negative log-likelihood over the batch, computed from logits via
/// log-sum-exp. When dlogits is non-null it receives (softmax - onehot)/N.
template <typename S>
double softmax_cross_entropy(const Tensor<S>& logits, const std::vector<int>& labels,
                             Tensor<S>* dlogits);

/// Concatenation along axis 1; inputs agree on every other dimension.
template <typename S>
Tensor<S> concat_axis1(const std::vector<const Tensor<S>*>& xs);
template <typename S>
std::vector<Tensor<S>> concat_axis1_grad(const Tensor<S>& dy, const std::vector<Shape>& xshapes);

/// Select `count` channels start, start+step, ... along axis 1.
template <typename S>
Tensor<S> take_channels(const Tensor<S>& x, int start, int step, int count);
template <typename S>
Tensor<S> take_channels_grad(const Tensor<S>& dy, const Shape& xshape, int start, int step,
                             int count);

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b);

}  // namespace gait::ops
