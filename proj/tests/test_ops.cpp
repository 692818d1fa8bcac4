#include <doctest.h>

#include "gait/ops.hpp"
#include "oracles.hpp"

using gait::Rng;
using gait::Shape;
using gait::Tensor;
using gait::TensorD;
namespace ops = gait::ops;

TEST_CASE("output geometry arithmetic") {
  CHECK(ops::conv_out_dim(60, 7, 1, 3) == 60);
  CHECK(ops::conv_out_dim(30, 5, 2, 2) == 15);
  CHECK(ops::conv_out_dim(3, 2, 1, 0) == 2);
  CHECK(ops::pool_out_dim(60, 2, 2) == 30);
  CHECK(ops::pool_out_dim(15, 2, 2) == 7);
  CHECK(ops::pool_out_dim(25, 2, 2) == 12);
  CHECK_THROWS_AS(ops::conv_out_dim(1, 2, 1, 0), gait::ConfigError);
  CHECK_THROWS_AS(ops::pool_out_dim(1, 2, 2), gait::ConfigError);
}

TEST_CASE("conv2d identity kernel returns the input") {
  TensorD x({1, 1, 3, 3});
  for (int i = 0; i < 9; ++i) x[i] = i + 1;
  TensorD w({1, 1, 1, 1});
  w[0] = 1.0;
  TensorD b({1});
  auto y = ops::conv2d(x, w, b, 1, 1, 0, 0);
  CHECK(y.shape() == x.shape());
  for (int i = 0; i < 9; ++i) CHECK(y[i] == doctest::Approx(x[i]));
}

TEST_CASE("conv2d emits one channel per filter") {
  Rng rng(1);
  auto x = oracle::rand_tensor({1, 50, 60, 60}, rng);
  auto w = oracle::rand_tensor({7, 7, 50, 96}, rng, -0.01, 0.01);
  auto b = oracle::rand_tensor({96}, rng);
  auto y = ops::conv2d(x, w, b, 1, 1, 3, 3);
  CHECK(y.shape() == Shape{1, 96, 60, 60});
}

TEST_CASE("conv2d matches the nested-loop reference") {
  Rng rng(2);
  struct Case {
    Shape x, w;
    int s, p;
  };
  const Case cases[] = {
      {{2, 3, 8, 8}, {3, 3, 3, 4}, 2, 1},
      {{1, 2, 7, 9}, {3, 3, 2, 5}, 1, 0},
      {{3, 1, 6, 6}, {5, 5, 1, 2}, 1, 2},
      {{2, 4, 9, 7}, {2, 2, 4, 3}, 2, 0},
      {{1, 3, 10, 10}, {7, 7, 3, 2}, 3, 3},
  };
  for (const auto& c : cases) {
    CAPTURE(gait::shape_str(c.x));
    auto x = oracle::rand_tensor(c.x, rng);
    auto w = oracle::rand_tensor(c.w, rng);
    auto b = oracle::rand_tensor({c.w[3]}, rng);
    auto got = ops::conv2d(x, w, b, c.s, c.s, c.p, c.p);
    auto want = oracle::naive_conv2d(x, w, b, c.s, c.p);
    REQUIRE(got.shape() == want.shape());
    CHECK(oracle::max_abs_diff(got, want) < 1e-6);
  }
}

TEST_CASE("conv2d gradients match finite differences") {
  Rng rng(3);
  auto x = oracle::rand_tensor({2, 2, 5, 5}, rng);
  auto w = oracle::rand_tensor({3, 3, 2, 3}, rng);
  auto b = oracle::rand_tensor({3}, rng);
  auto probe = oracle::rand_tensor({2, 3, 3, 3}, rng);  // s=2, p=1 -> 3x3 output

  auto loss_given = [&](const TensorD& xx, const TensorD& ww, const TensorD& bb) {
    auto y = ops::conv2d(xx, ww, bb, 2, 2, 1, 1);
    double acc = 0.0;
    for (std::int64_t i = 0; i < y.numel(); ++i) acc += y[i] * probe[i];
    return acc;
  };

  TensorD dx, dw, db;
  ops::conv2d_grad(x, w, probe, 2, 2, 1, 1, dx, dw, db);
  auto fd_x = oracle::fd_grad([&](const TensorD& t) { return loss_given(t, w, b); }, x);
  auto fd_w = oracle::fd_grad([&](const TensorD& t) { return loss_given(x, t, b); }, w);
  auto fd_b = oracle::fd_grad([&](const TensorD& t) { return loss_given(x, w, t); }, b);
  CHECK(oracle::max_rel_err(dx, fd_x) < 1e-4);
  CHECK(oracle::max_rel_err(dw, fd_w) < 1e-4);
  CHECK(oracle::max_rel_err(db, fd_b) < 1e-4);
}

TEST_CASE("conv3d identity kernel returns the input") {
  Rng rng(4);
  auto x = oracle::rand_tensor({1, 1, 3, 3, 3}, rng);
  TensorD w({1, 1, 1, 1, 1});
  w[0] = 1.0;
  TensorD b({1});
  auto y = ops::conv3d(x, w, b, 1, 1, 1, 0, 0, 0);
  CHECK(y.shape() == x.shape());
  CHECK(oracle::max_abs_diff(y, x) == 0.0);
}

TEST_CASE("conv3d branch geometry: 48 filters over a 25-frame volume") {
  Rng rng(5);
  auto x = oracle::rand_tensor({1, 1, 25, 60, 60}, rng);
  auto w = oracle::rand_tensor({3, 3, 3, 1, 48}, rng, -0.05, 0.05);
  TensorD b({48});
  auto y = ops::conv3d(x, w, b, 1, 1, 1, 1, 1, 1);
  CHECK(y.shape() == Shape{1, 48, 25, 60, 60});
}

TEST_CASE("conv3d matches the nested-loop reference") {
  Rng rng(6);
  struct Case {
    Shape x, w;
    int s, p;
  };
  const Case cases[] = {
      {{1, 2, 6, 6, 6}, {3, 3, 3, 2, 3}, 1, 0},
      {{2, 1, 5, 6, 7}, {3, 3, 3, 1, 2}, 1, 1},
      {{1, 3, 4, 4, 4}, {2, 2, 2, 3, 4}, 2, 0},
      {{1, 2, 5, 5, 5}, {3, 3, 3, 2, 2}, 2, 1},
  };
  for (const auto& c : cases) {
    CAPTURE(gait::shape_str(c.x));
    auto x = oracle::rand_tensor(c.x, rng);
    auto w = oracle::rand_tensor(c.w, rng);
    auto b = oracle::rand_tensor({c.w[4]}, rng);
    auto got = ops::conv3d(x, w, b, c.s, c.s, c.s, c.p, c.p, c.p);
    auto want = oracle::naive_conv3d(x, w, b, c.s, c.p);
    REQUIRE(got.shape() == want.shape());
    CHECK(oracle::max_abs_diff(got, want) < 1e-6);
  }
}

TEST_CASE("conv3d gradients match finite differences") {
  Rng rng(7);
  auto x = oracle::rand_tensor({1, 2, 4, 4, 4}, rng);
  auto w = oracle::rand_tensor({3, 3, 3, 2, 2}, rng);
  auto b = oracle::rand_tensor({2}, rng);
  auto probe = oracle::rand_tensor({1, 2, 4, 4, 4}, rng);  // s=1, p=1 keeps dims

  auto loss_given = [&](const TensorD& xx, const TensorD& ww, const TensorD& bb) {
    auto y = ops::conv3d(xx, ww, bb, 1, 1, 1, 1, 1, 1);
    double acc = 0.0;
    for (std::int64_t i = 0; i < y.numel(); ++i) acc += y[i] * probe[i];
    return acc;
  };

  TensorD dx, dw, db;
  ops::conv3d_grad(x, w, probe, 1, 1, 1, 1, 1, 1, dx, dw, db);
  auto fd_x = oracle::fd_grad([&](const TensorD& t) { return loss_given(t, w, b); }, x);
  auto fd_w = oracle::fd_grad([&](const TensorD& t) { return loss_given(x, t, b); }, w);
  auto fd_b = oracle::fd_grad([&](const TensorD& t) { return loss_given(x, w, t); }, b);
  CHECK(oracle::max_rel_err(dx, fd_x) < 1e-4);
  CHECK(oracle::max_rel_err(dw, fd_w) < 1e-4);
  CHECK(oracle::max_rel_err(db, fd_b) < 1e-4);
}

TEST_CASE("max pool picks window maxima") {
  SUBCASE("2x2 block reduces to its maximum") {
    TensorD x({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
    Tensor<int> ix;
    auto y = ops::maxpool2d(x, 2, 2, 2, 2, ix);
    CHECK(y.shape() == Shape{1, 1, 1, 1});
    CHECK(y[0] == 4.0);
    CHECK(ix[0] == 3);
  }
  SUBCASE("constant input pools to constant") {
    TensorD x({1, 2, 6, 6}, 3.5);
    Tensor<int> ix;
    auto y = ops::maxpool2d(x, 2, 2, 2, 2, ix);
    CHECK(y.shape() == Shape{1, 2, 3, 3});
    for (std::int64_t i = 0; i < y.numel(); ++i) CHECK(y[i] == 3.5);
  }
  SUBCASE("random input matches window scan") {
    Rng rng(8);
    auto x = oracle::rand_tensor({1, 2, 8, 8}, rng);
    Tensor<int> ix;
    auto y = ops::maxpool2d(x, 2, 2, 2, 2, ix);
    auto want = oracle::naive_maxpool2d(x, 2, 2);
    CHECK(oracle::max_abs_diff(y, want) == 0.0);
  }
  SUBCASE("gradient routes to the argmax only") {
    Rng rng(9);
    auto x = oracle::rand_tensor_offzero({1, 1, 4, 4}, rng);
    Tensor<int> ix;
    auto y = ops::maxpool2d(x, 2, 2, 2, 2, ix);
    auto probe = oracle::rand_tensor({1, 1, 2, 2}, rng);
    auto dx = ops::maxpool2d_grad(probe, ix, x.shape());
    auto fd = oracle::fd_grad(
        [&](const TensorD& t) {
          Tensor<int> j;
          auto yy = ops::maxpool2d(t, 2, 2, 2, 2, j);
          double acc = 0.0;
          for (std::int64_t i = 0; i < yy.numel(); ++i) acc += yy[i] * probe[i];
          return acc;
        },
        x);
    CHECK(oracle::max_rel_err(dx, fd) < 1e-4);
  }
  SUBCASE("3d windows cover the temporal axis") {
    Rng rng(10);
    auto x = oracle::rand_tensor({1, 1, 4, 4, 4}, rng);
    Tensor<int> ix;
    auto y = ops::maxpool3d(x, 2, 2, 2, 2, 2, 2, ix);
    CHECK(y.shape() == Shape{1, 1, 2, 2, 2});
    // brute scan
    for (int t = 0; t < 2; ++t)
      for (int h = 0; h < 2; ++h)
        for (int w = 0; w < 2; ++w) {
          double best = -1e300;
          for (int a = 0; a < 2; ++a)
            for (int bb = 0; bb < 2; ++bb)
              for (int c = 0; c < 2; ++c)
                best = std::max(best, x.at(0, 0, 2 * t + a, 2 * h + bb, 2 * w + c));
          CHECK(y.at(0, 0, t, h, w) == best);
        }
  }
}

TEST_CASE("average pool") {
  SUBCASE("constant input is preserved") {
    TensorD x({1, 3, 8, 8}, 2.0);
    auto y = ops::avgpool2d(x, 8, 8, 1, 1);
    CHECK(y.shape() == Shape{1, 3, 1, 1});
    for (int c = 0; c < 3; ++c) CHECK(y[c] == doctest::Approx(2.0));
  }
  SUBCASE("2x2 stride-1 window averages four neighbours") {
    TensorD x({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
    auto y = ops::avgpool2d(x, 2, 2, 1, 1);
    CHECK(y[0] == doctest::Approx(2.5));
  }
  SUBCASE("gradient spreads uniformly") {
    Rng rng(11);
    auto x = oracle::rand_tensor({1, 2, 4, 4}, rng);
    auto probe = oracle::rand_tensor({1, 2, 3, 3}, rng);  // k=2, s=1
    auto dx = ops::avgpool2d_grad(probe, x.shape(), 2, 2, 1, 1);
    auto fd = oracle::fd_grad(
        [&](const TensorD& t) {
          auto yy = ops::avgpool2d(t, 2, 2, 1, 1);
          double acc = 0.0;
          for (std::int64_t i = 0; i < yy.numel(); ++i) acc += yy[i] * probe[i];
          return acc;
        },
        x);
    CHECK(oracle::max_rel_err(dx, fd) < 1e-4);
  }
}

TEST_CASE("relu clamps negatives and gates gradients") {
  TensorD x({3}, std::vector<double>{-1.0, 0.0, 2.0});
  auto y = ops::relu(x);
  CHECK(y[0] == 0.0);
  CHECK(y[1] == 0.0);
  CHECK(y[2] == 2.0);

  TensorD all_neg({4}, std::vector<double>{-3, -2, -1, -0.5});
  auto z = ops::relu(all_neg);
  for (int i = 0; i < 4; ++i) CHECK(z[i] == 0.0);

  TensorD g({2}, std::vector<double>{10.0, 10.0});
  TensorD xx({2}, std::vector<double>{-0.5, 0.5});
  auto dx = ops::relu_grad(xx, g);
  CHECK(dx[0] == 0.0);
  CHECK(dx[1] == 10.0);
}

TEST_CASE("softmax") {
  SUBCASE("uniform logits give uniform scores") {
    TensorD x({1, 3});
    auto y = ops::softmax(x);
    for (int i = 0; i < 3; ++i) CHECK(y[i] == doctest::Approx(1.0 / 3));
  }
  SUBCASE("huge logits do not overflow") {
    TensorD x({1, 2}, std::vector<double>{1000.0, 0.0});
    auto y = ops::softmax(x);
    CHECK(y[0] == doctest::Approx(1.0));
    CHECK(y[1] == doctest::Approx(0.0));
    CHECK(std::isfinite(y[0]));
  }
  SUBCASE("matches direct evaluation and preserves order") {
    Rng rng(12);
    auto x = oracle::rand_tensor({1, 7}, rng, -3.0, 3.0);
    auto y = ops::softmax(x);
    double z = 0.0;
    for (int i = 0; i < 7; ++i) z += std::exp(x[i]);
    double total = 0.0;
    for (int i = 0; i < 7; ++i) {
      CHECK(y[i] == doctest::Approx(std::exp(x[i]) / z).epsilon(1e-6));
      total += y[i];
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
    // argmax preserved
    int ax = 0, ay = 0;
    for (int i = 1; i < 7; ++i) {
      if (x[i] > x[ax]) ax = i;
      if (y[i] > y[ay]) ay = i;
    }
    CHECK(ax == ay);
  }
}

TEST_CASE("fully connected affine map") {
  SUBCASE("identity weights pass input through") {
    TensorD x({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
    TensorD w({3, 3});
    for (int i = 0; i < 3; ++i) w.at(i, i) = 1.0;
    TensorD b({3});
    auto y = ops::fully_connected(x, w, b);
    CHECK(oracle::max_abs_diff(y, x) == 0.0);
  }
  SUBCASE("zero weights return the bias") {
    TensorD x({2, 4}, 3.0);
    TensorD w({4, 2});
    TensorD b({2}, std::vector<double>{5.0, -1.0});
    auto y = ops::fully_connected(x, w, b);
    for (int n = 0; n < 2; ++n) {
      CHECK(y.at(n, 0) == 5.0);
      CHECK(y.at(n, 1) == -1.0);
    }
  }
  SUBCASE("random map matches explicit products") {
    Rng rng(13);
    auto x = oracle::rand_tensor({3, 10}, rng);
    auto w = oracle::rand_tensor({10, 5}, rng);
    auto b = oracle::rand_tensor({5}, rng);
    auto y = ops::fully_connected(x, w, b);
    for (int n = 0; n < 3; ++n)
      for (int u = 0; u < 5; ++u) {
        double acc = b[u];
        for (int d = 0; d < 10; ++d) acc += x.at(n, d) * w.at(d, u);
        CHECK(y.at(n, u) == doctest::Approx(acc).epsilon(1e-9));
      }
  }
  SUBCASE("gradients match finite differences") {
    Rng rng(14);
    auto x = oracle::rand_tensor({2, 6}, rng);
    auto w = oracle::rand_tensor({6, 4}, rng);
    auto b = oracle::rand_tensor({4}, rng);
    auto probe = oracle::rand_tensor({2, 4}, rng);
    auto loss = [&](const TensorD& xx, const TensorD& ww, const TensorD& bb) {
      auto y = ops::fully_connected(xx, ww, bb);
      double acc = 0.0;
      for (std::int64_t i = 0; i < y.numel(); ++i) acc += y[i] * probe[i];
      return acc;
    };
    TensorD dx, dw, db;
    ops::fully_connected_grad(x, w, probe, dx, dw, db);
    CHECK(oracle::max_rel_err(dx, oracle::fd_grad([&](const TensorD& t) { return loss(t, w, b); }, x)) < 1e-4);
    CHECK(oracle::max_rel_err(dw, oracle::fd_grad([&](const TensorD& t) { return loss(x, t, b); }, w)) < 1e-4);
    CHECK(oracle::max_rel_err(db, oracle::fd_grad([&](const TensorD& t) { return loss(x, w, t); }, b)) < 1e-4);
  }
}

TEST_CASE("cross-channel normalization") {
  SUBCASE("degenerate window with zero exponent is identity") {
    Rng rng(15);
    auto x = oracle::rand_tensor({1, 1, 3, 3}, rng);
    auto y = ops::lrn(x, 1, 1e-4, 0.0, 2.0);
    CHECK(oracle::max_abs_diff(y, x) < 1e-12);
  }
  SUBCASE("zero input stays zero") {
    TensorD x({1, 8, 4, 4});
    auto y = ops::lrn(x, 5, 1e-4, 0.75, 2.0);
    for (std::int64_t i = 0; i < y.numel(); ++i) CHECK(y[i] == 0.0);
  }
  SUBCASE("matches the per-element formula") {
    Rng rng(16);
    auto x = oracle::rand_tensor({2, 8, 4, 4}, rng, -2.0, 2.0);
    auto y = ops::lrn(x, 5, 1e-4, 0.75, 2.0);
    auto want = oracle::naive_lrn(x, 5, 1e-4, 0.75, 2.0);
    CHECK(oracle::max_abs_diff(y, want) < 1e-9);
  }
  SUBCASE("gradient matches finite differences") {
    Rng rng(17);
    auto x = oracle::rand_tensor({1, 6, 3, 3}, rng, -2.0, 2.0);
    auto probe = oracle::rand_tensor({1, 6, 3, 3}, rng);
    auto dx = ops::lrn_grad(x, probe, 5, 1e-4, 0.75, 2.0);
    auto fd = oracle::fd_grad(
        [&](const TensorD& t) {
          auto yy = ops::lrn(t, 5, 1e-4, 0.75, 2.0);
          double acc = 0.0;
          for (std::int64_t i = 0; i < yy.numel(); ++i) acc += yy[i] * probe[i];
          return acc;
        },
        x);
    CHECK(oracle::max_rel_err(dx, fd) < 1e-4);
  }
}

TEST_CASE("batch normalization") {
  SUBCASE("already-normalized batch passes through") {
    TensorD x({2, 1, 1, 2}, std::vector<double>{-1, 1, 1, -1});  // mean 0, var 1
    TensorD gamma({1}, std::vector<double>{1.0}), beta({1});
    TensorD rm({1}), rv({1}, std::vector<double>{1.0});
    TensorD sm, si;
    auto y = ops::batchnorm_train(x, gamma, beta, rm, rv, 0.9, 1e-8, sm, si);
    CHECK(oracle::max_abs_diff(y, x) < 1e-6);
  }
  SUBCASE("beta shifts the output mean") {
    Rng rng(18);
    auto x = oracle::rand_tensor({4, 3, 2, 2}, rng);
    TensorD gamma({3}, std::vector<double>{1, 1, 1});
    TensorD beta({3}, std::vector<double>{5, 5, 5});
    TensorD rm({3}), rv({3}, std::vector<double>{1, 1, 1});
    TensorD sm, si;
    auto y = ops::batchnorm_train(x, gamma, beta, rm, rv, 0.9, 1e-5, sm, si);
    for (int c = 0; c < 3; ++c) {
      double mu = 0.0;
      int cnt = 0;
      for (int n = 0; n < 4; ++n)
        for (int i = 0; i < 4; ++i) {
          mu += y[(n * 3 + c) * 4 + i];
          ++cnt;
        }
      CHECK(mu / cnt == doctest::Approx(5.0).epsilon(1e-6));
    }
  }
  SUBCASE("train output has unit variance per channel") {
    Rng rng(19);
    auto x = oracle::rand_tensor({8, 2, 3, 3}, rng, -4.0, 4.0);
    TensorD gamma({2}, std::vector<double>{1, 1}), beta({2});
    TensorD rm({2}), rv({2}, std::vector<double>{1, 1});
    TensorD sm, si;
    auto y = ops::batchnorm_train(x, gamma, beta, rm, rv, 0.9, 1e-9, sm, si);
    for (int c = 0; c < 2; ++c) {
      double mu = 0.0, var = 0.0;
      const int cnt = 8 * 9;
      for (int n = 0; n < 8; ++n)
        for (int i = 0; i < 9; ++i) mu += y[(n * 2 + c) * 9 + i];
      mu /= cnt;
      for (int n = 0; n < 8; ++n)
        for (int i = 0; i < 9; ++i) {
          const double d = y[(n * 2 + c) * 9 + i] - mu;
          var += d * d;
        }
      var /= cnt;
      CHECK(mu == doctest::Approx(0.0).epsilon(1e-5));
      CHECK(var == doctest::Approx(1.0).epsilon(1e-5));
    }
  }
  SUBCASE("eval mode uses running statistics") {
    TensorD x({2, 1, 1, 1}, std::vector<double>{3.0, 7.0});
    TensorD gamma({1}, std::vector<double>{2.0}), beta({1}, std::vector<double>{1.0});
    TensorD rm({1}, std::vector<double>{5.0}), rv({1}, std::vector<double>{4.0});
    auto y = ops::batchnorm_eval(x, gamma, beta, rm, rv, 0.0);
    CHECK(y[0] == doctest::Approx(2.0 * (3.0 - 5.0) / 2.0 + 1.0));
    CHECK(y[1] == doctest::Approx(2.0 * (7.0 - 5.0) / 2.0 + 1.0));
  }
  SUBCASE("train mode rejects a batch of one") {
    TensorD x({1, 2, 2, 2});
    TensorD gamma({2}), beta({2}), rm({2}), rv({2}), sm, si;
    CHECK_THROWS_AS(ops::batchnorm_train(x, gamma, beta, rm, rv, 0.9, 1e-5, sm, si),
                    gait::ConfigError);
  }
  SUBCASE("gradients match finite differences") {
    Rng rng(20);
    auto x = oracle::rand_tensor({3, 2, 2, 2}, rng);
    auto gamma = oracle::rand_tensor({2}, rng, 0.5, 1.5);
    auto beta = oracle::rand_tensor({2}, rng);
    auto probe = oracle::rand_tensor({3, 2, 2, 2}, rng);
    auto loss = [&](const TensorD& xx, const TensorD& gg, const TensorD& bb) {
      TensorD rm({2}), rv({2}, std::vector<double>{1, 1});  // fresh stats; side effects discarded
      TensorD sm, si;
      auto y = ops::batchnorm_train(xx, gg, bb, rm, rv, 0.9, 1e-5, sm, si);
      double acc = 0.0;
      for (std::int64_t i = 0; i < y.numel(); ++i) acc += y[i] * probe[i];
      return acc;
    };
    TensorD rm({2}), rv({2}, std::vector<double>{1, 1}), sm, si;
    ops::batchnorm_train(x, gamma, beta, rm, rv, 0.9, 1e-5, sm, si);
    TensorD dx, dgamma, dbeta;
    ops::batchnorm_grad(x, gamma, probe, sm, si, dx, dgamma, dbeta);
    CHECK(oracle::max_rel_err(dx, oracle::fd_grad([&](const TensorD& t) { return loss(t, gamma, beta); }, x)) < 1e-5);
    CHECK(oracle::max_rel_err(dgamma, oracle::fd_grad([&](const TensorD& t) { return loss(x, t, beta); }, gamma)) < 1e-5);
    CHECK(oracle::max_rel_err(dbeta, oracle::fd_grad([&](const TensorD& t) { return loss(x, gamma, t); }, beta)) < 1e-5);
  }
}

TEST_CASE("dropout") {
  SUBCASE("rate zero is identity") {
    Rng rng(21);
    auto x = oracle::rand_tensor({100}, rng);
    TensorD mask;
    auto y = ops::dropout_train(x, 0.0, rng, mask);
    CHECK(oracle::max_abs_diff(y, x) == 0.0);
  }
  SUBCASE("survivor fraction tracks the keep probability") {
    Rng rng(22);
    TensorD x({100000}, 1.0);
    TensorD mask;
    auto y = ops::dropout_train(x, 0.4, rng, mask);
    std::int64_t kept = 0;
    for (std::int64_t i = 0; i < y.numel(); ++i)
      if (y[i] != 0.0) ++kept;
    const double frac = static_cast<double>(kept) / 100000.0;
    CHECK(frac == doctest::Approx(0.6).epsilon(0.017));
    // inverted scaling: survivors carry 1/(1-rate)
    for (std::int64_t i = 0; i < y.numel(); ++i)
      if (y[i] != 0.0) CHECK(y[i] == doctest::Approx(1.0 / 0.6));
  }
  SUBCASE("gradient uses the same mask") {
    Rng rng(23);
    auto x = oracle::rand_tensor({50}, rng);
    TensorD mask;
    auto y = ops::dropout_train(x, 0.5, rng, mask);
    auto g = oracle::rand_tensor({50}, rng);
    auto dx = ops::dropout_grad(g, mask);
    for (int i = 0; i < 50; ++i) CHECK(dx[i] == g[i] * mask[i]);
  }
  SUBCASE("rate one is rejected") {
    Rng rng(24);
    TensorD x({4}), mask;
    CHECK_THROWS_AS(ops::dropout_train(x, 1.0, rng, mask), gait::ConfigError);
  }
}

TEST_CASE("softmax cross-entropy") {
  SUBCASE("two equal logits cost ln 2") {
    TensorD logits({1, 2});
    const double loss = ops::softmax_cross_entropy<double>(logits, {0}, nullptr);
    CHECK(loss == doctest::Approx(std::log(2.0)));
  }
  SUBCASE("gradient is softmax minus one-hot over batch") {
    TensorD logits({2, 3}, std::vector<double>{1, 2, 3, 0, 0, 0});
    TensorD d;
    ops::softmax_cross_entropy<double>(logits, {2, 1}, &d);
    auto p = ops::softmax(logits);
    CHECK(d.at(0, 0) == doctest::Approx(p.at(0, 0) / 2));
    CHECK(d.at(0, 2) == doctest::Approx((p.at(0, 2) - 1.0) / 2));
    CHECK(d.at(1, 1) == doctest::Approx((p.at(1, 1) - 1.0) / 2));
  }
  SUBCASE("gradient matches finite differences") {
    Rng rng(25);
    auto logits = oracle::rand_tensor({3, 5}, rng, -2.0, 2.0);
    const std::vector<int> labels{4, 0, 2};
    TensorD d;
    ops::softmax_cross_entropy<double>(logits, labels, &d);
    auto fd = oracle::fd_grad(
        [&](const TensorD& t) { return ops::softmax_cross_entropy<double>(t, labels, nullptr); },
        logits);
    CHECK(oracle::max_rel_err(d, fd) < 1e-4);
  }
  SUBCASE("out-of-range label is rejected") {
    TensorD logits({1, 3});
    CHECK_THROWS_AS(ops::softmax_cross_entropy<double>(logits, {3}, nullptr), gait::ConfigError);
  }
}

TEST_CASE("concat and channel selection") {
  Rng rng(26);
  auto a = oracle::rand_tensor({2, 3, 2, 2}, rng);
  auto b = oracle::rand_tensor({2, 5, 2, 2}, rng);

  SUBCASE("concat stacks along the channel axis") {
    auto y = ops::concat_axis1<double>({&a, &b});
    CHECK(y.shape() == Shape{2, 8, 2, 2});
    CHECK(y.at(0, 0, 1, 1) == a.at(0, 0, 1, 1));
    CHECK(y.at(1, 3, 0, 0) == b.at(1, 0, 0, 0));
    CHECK(y.at(1, 7, 1, 0) == b.at(1, 4, 1, 0));

    auto grads = ops::concat_axis1_grad(y, {a.shape(), b.shape()});
    CHECK(oracle::max_abs_diff(grads[0], a) == 0.0);
    CHECK(oracle::max_abs_diff(grads[1], b) == 0.0);
  }
  SUBCASE("mismatched spatial dims are rejected") {
    auto c = oracle::rand_tensor({2, 2, 3, 2}, rng);
    CHECK_THROWS_AS(ops::concat_axis1<double>({&a, &c}), gait::ConfigError);
  }
  SUBCASE("strided channel selection deinterleaves") {
    auto x = oracle::rand_tensor({1, 6, 2, 2}, rng);
    auto even = ops::take_channels(x, 0, 2, 3);
    auto odd = ops::take_channels(x, 1, 2, 3);
    CHECK(even.shape() == Shape{1, 3, 2, 2});
    for (int k = 0; k < 3; ++k)
      for (int i = 0; i < 4; ++i) {
        CHECK(even[k * 4 + i] == x[(2 * k) * 4 + i]);
        CHECK(odd[k * 4 + i] == x[(2 * k + 1) * 4 + i]);
      }
    // scatter-back of both halves reassembles the input
    auto gx_even = ops::take_channels_grad(even, x.shape(), 0, 2, 3);
    auto gx_odd = ops::take_channels_grad(odd, x.shape(), 1, 2, 3);
    auto sum = ops::add(gx_even, gx_odd);
    CHECK(oracle::max_abs_diff(sum, x) == 0.0);
  }
  SUBCASE("selection beyond the channel range is rejected") {
    CHECK_THROWS_AS(ops::take_channels(a, 0, 2, 3), gait::ConfigError);
  }
}
