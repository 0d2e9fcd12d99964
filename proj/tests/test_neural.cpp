#include "doctest.h"

#include "hrtfp/errors.hpp"
#include "hrtfp/nn/layers.hpp"
#include "hrtfp/nn/networks.hpp"
#include "hrtfp/nn/train.hpp"

#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

using namespace hrtfp;
using namespace hrtfp::nn;
using namespace hrtfp::nn::testing;

namespace {

// Direct definition: y[o, b, j] = bias[o] + sum_{c,t} w[o, c, t] x[c, b, j*stride + t - pad].
Eigen::MatrixXd naive_conv(const Eigen::MatrixXd& w, const Eigen::MatrixXd& bias, const Eigen::MatrixXd& x,
                           int batch, int length, const ConvGeometry& g) {
  const int lout = g.out_length(length);
  Eigen::MatrixXd y(g.out_channels, batch * lout);
  for (int o = 0; o < g.out_channels; ++o) {
    for (int b = 0; b < batch; ++b) {
      for (int j = 0; j < lout; ++j) {
        double s = bias(o, 0);
        for (int c = 0; c < g.in_channels; ++c) {
          for (int t = 0; t < g.kernel; ++t) {
            const int src = j * g.stride + t - g.padding;
            if (src >= 0 && src < length) s += w(o, c * g.kernel + t) * x(c, b * length + src);
          }
        }
        y(o, b * lout + j) = s;
      }
    }
  }
  return y;
}

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("hrtfp_nn_" + name)).string();
}

double spearman(const std::vector<double>& y) {
  const std::size_t n = y.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return y[a] < y[b]; });
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n; ++i) rank[order[i]] = static_cast<double>(i);
  double d2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) d2 += (rank[i] - static_cast<double>(i)) * (rank[i] - static_cast<double>(i));
  const double nn = static_cast<double>(n);
  return 1.0 - 6.0 * d2 / (nn * (nn * nn - 1.0));
}

}  // namespace

TEST_CASE("loss_mse") {
  Eigen::MatrixXd a(2, 1), b(2, 1);
  a << 0, 0;
  b << 3, 4;
  CHECK(loss_mse(a, b) == 12.5);
  CHECK(loss_mse(b, b) == 0.0);
  CHECK(loss_mse(b.array() + 1.0, b) == 1.0);
  CHECK_THROWS_AS(loss_mse(a, Eigen::MatrixXd::Zero(3, 1)), DimensionError);
}

TEST_CASE("convolution matches the direct definition") {
  std::mt19937_64 rng(1);
  for (const ConvGeometry g : {ConvGeometry{3, 5, 3, 2, 1}, ConvGeometry{4, 6, 3, 1, 1}, ConvGeometry{2, 3, 5, 1, 2},
                               ConvGeometry{2, 2, 3, 1, 0}}) {
    for (int length : {1, 2, 7, 64}) {
      if (g.out_length(length) < 1) continue;
      const int batch = 3;
      const Eigen::MatrixXd w = randn(g.out_channels, g.in_channels * g.kernel, rng);
      const Eigen::MatrixXd b = randn(g.out_channels, 1, rng);
      const Eigen::MatrixXd x = randn(g.in_channels, batch * length, rng);
      Eigen::MatrixXd cols;
      const Eigen::MatrixXd y = conv_forward(w, b, x, batch, length, g, cols);
      CHECK((y - naive_conv(w, b, x, batch, length, g)).cwiseAbs().maxCoeff() < 1e-12);

      // backward is the adjoint: <dy, conv(x)> is linear in x and w
      const Eigen::MatrixXd dy = randn(y.rows(), y.cols(), rng);
      Eigen::MatrixXd dw = Eigen::MatrixXd::Zero(w.rows(), w.cols());
      Eigen::MatrixXd db = Eigen::MatrixXd::Zero(b.rows(), 1);
      const Eigen::MatrixXd dx = conv_backward(w, cols, dy, batch, length, g, dw, db);
      const Eigen::MatrixXd zero_b = Eigen::MatrixXd::Zero(b.rows(), 1);
      const double lhs = (dy.array() * naive_conv(w, zero_b, x, batch, length, g).array()).sum();
      CHECK((dx.array() * x.array()).sum() == doctest::Approx(lhs).epsilon(1e-12));
      CHECK((dw.array() * w.array()).sum() == doctest::Approx(lhs).epsilon(1e-12));
      CHECK((db.col(0) - dy.rowwise().sum()).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("reshape and pooling helpers") {
  std::mt19937_64 rng(2);
  const Eigen::MatrixXd x = randn(12, 5, rng);
  const Eigen::MatrixXd s = to_sequence(x, 3, 4);
  CHECK(s(1, 2 * 4 + 3) == x(1 * 4 + 3, 2));
  CHECK(from_sequence(s, 3, 4) == x);
  const Eigen::MatrixXd pooled = avg_pool(s, 5, 4);
  CHECK(pooled(2, 1) == doctest::Approx(s.block(2, 4, 1, 4).mean()));
  const Eigen::MatrixXd dp = randn(3, 5, rng);
  CHECK((avg_pool_backward(dp, 4).array() * s.array()).sum() == doctest::Approx((dp.array() * pooled.array()).sum()));
}

TEST_CASE("network shape contract and trivial forwards") {
  std::mt19937_64 rng(3);
  const auto mp = init_params(NetKind::kMagnitude, 5);
  const auto op = init_params(NetKind::kOnset, 5);
  CHECK(forward_magnitude(mp, random_magnitude_batch(rng, 2, 5)).rows() == 64);
  CHECK(forward_onset(op, random_onset_batch(rng, 5)).rows() == 36);

  // all-zero input with zero biases propagates zeros
  MagnitudeBatch zero = random_magnitude_batch(rng, 1, 3);
  zero.sch[0].setZero();
  zero.anthro.setZero();
  zero.freq.setZero();
  zero.ear.setZero();
  CHECK(forward_magnitude(mp, zero).cwiseAbs().maxCoeff() == 0.0);

  // zero weights, bias on the output layer only -> output equals that bias
  auto q = zeros_like(op);
  const Eigen::MatrixXd bias = randn(36, 1, rng);
  q.tensors.back() = bias;
  OnsetNetInput in{Eigen::VectorXd::Zero(13), Eigen::Vector2d(1, 0)};
  CHECK(forward_onset(q, in) == bias.col(0));

  // bit-identical for a fixed seed
  const auto batch = random_magnitude_batch(rng, 2, 4);
  CHECK(forward_magnitude(init_params(NetKind::kMagnitude, 5), batch) == forward_magnitude(mp, batch));
  CHECK(init_params(NetKind::kMagnitude, 6).tensors[0] != mp.tensors[0]);

  // only the ear flag differs -> outputs differ
  MagnitudeNetInput a{randn(441, 3, rng), randn(13, 1, rng).col(0), Eigen::VectorXd::Zero(41), Eigen::Vector2d(1, 0)};
  a.freq_onehot[7] = 1.0;
  MagnitudeNetInput b = a;
  b.ear_onehot = Eigen::Vector2d(0, 1);
  CHECK((forward_magnitude(mp, a) - forward_magnitude(mp, b)).norm() > 1e-6);

  // the per-sample and batched paths agree
  const auto both = forward_magnitude(mp, make_batch(std::vector<MagnitudeNetInput>{a, b}));
  CHECK((both.col(1) - forward_magnitude(mp, b)).cwiseAbs().maxCoeff() < 1e-12);

  a.freq_onehot[8] = 1.0;
  CHECK_THROWS_AS(forward_magnitude(mp, a), DomainError);
  a.freq_onehot = Eigen::VectorXd::Zero(40);
  CHECK_THROWS_AS(forward_magnitude(mp, a), DimensionError);
  CHECK_THROWS_AS(forward_onset(mp, in), DimensionError);
}

TEST_CASE("gradients match central differences") {
  std::mt19937_64 rng(4);
  for (int draw = 0; draw < 5; ++draw) {
    const auto mp = random_params(NetKind::kMagnitude, 100 + draw);
    const auto mb = random_magnitude_batch(rng, 2, 3);
    const auto mag_check = gradient_check(mp, mb, randn(64, 3, rng), 8, rng);
    const double mag_err = mag_check.worst;
    CHECK(mag_check.skipped * 10 < mag_check.sampled);
    CHECK(mag_err < 1e-4);

    const auto op = random_params(NetKind::kOnset, 200 + draw);
    const auto ob = random_onset_batch(rng, 3);
    const auto onset_check = gradient_check(op, ob, randn(36, 3, rng), 8, rng);
    const double onset_err = onset_check.worst;
    CHECK(onset_check.skipped * 10 < onset_check.sampled);
    CHECK(onset_err < 1e-4);
  }
}

TEST_CASE("gradient edge cases: zero loss, loss scaling, accumulation") {
  std::mt19937_64 rng(5);
  const auto p = random_params(NetKind::kMagnitude, 9);
  const auto b = random_magnitude_batch(rng, 2, 4);
  const Eigen::MatrixXd y = forward_magnitude(p, b);
  const auto g0 = analytic_grads(p, b, y);
  for (const auto& t : g0.tensors) CHECK(t.cwiseAbs().maxCoeff() == 0.0);

  ForwardCache cache;
  forward_magnitude(p, b, &cache);
  const Eigen::MatrixXd d = randn(64, 4, rng);
  ModelParams g1 = zeros_like(p), g2 = zeros_like(p);
  backward_magnitude(p, b, cache, d, g1);
  backward_magnitude(p, b, cache, 2.0 * d, g2);
  for (std::size_t i = 0; i < g1.tensors.size(); ++i) {
    CHECK((g2.tensors[i] - 2.0 * g1.tensors[i]).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + g1.tensors[i].cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("adam") {
  std::mt19937_64 rng(6);
  auto p = init_params(NetKind::kOnset, 1);
  const auto start = p;
  auto g = zeros_like(p);
  for (auto& t : g.tensors) t = randn(t.rows(), t.cols(), rng);
  auto state = adam_init(p);
  adam_step(p, g, state, {0.01});
  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    const Eigen::ArrayXXd step = start.tensors[i].array() - p.tensors[i].array();
    // m_hat / sqrt(v_hat) = g / |g| on the first step
    const Eigen::ArrayXXd expect = 0.01 * g.tensors[i].array() / (g.tensors[i].array().abs() + 1e-8);
    CHECK((step - expect).abs().maxCoeff() < 1e-12);
  }

  auto q = init_params(NetKind::kOnset, 1);
  auto s2 = adam_init(q);
  adam_step(q, zeros_like(q), s2);
  for (std::size_t i = 0; i < q.tensors.size(); ++i) CHECK(q.tensors[i] == start.tensors[i]);

  auto bad = zeros_like(q);
  bad.tensors[3](0, 0) = std::nan("");
  CHECK_THROWS_AS(adam_step(q, bad, s2), DomainError);
  CHECK(q.tensors[0] == start.tensors[0]);
}

namespace {

// Small random regression problem on the onset network.
OnsetDataset toy_onsets(std::uint64_t seed, int subjects) {
  std::mt19937_64 rng(seed);
  OnsetDataset d;
  const Eigen::MatrixXd mix = randn(36, 13, rng, 0.3);
  for (int s = 0; s < subjects; ++s) {
    const Eigen::VectorXd anthro = randn(13, 1, rng).col(0);
    for (int ear = 0; ear < 2; ++ear) {
      Eigen::VectorXd t = mix * anthro;
      t.array() += ear == 0 ? 0.5 : -0.5;
      d.rows.push_back({anthro, ear, t});
    }
  }
  return d;
}

}  // namespace

TEST_CASE("training: lr 0, memorization, seeds, snapshot rule") {
  const auto data = toy_onsets(1, 4);
  const auto val = toy_onsets(2, 1);
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.learning_rate = 0.0;
  const auto flat = train(data, &val, init_params(NetKind::kOnset, 3), cfg);
  for (double l : flat.history.train) CHECK(l == flat.history.train.front());
  for (double l : flat.history.val) CHECK(l == flat.history.val.front());

  cfg.learning_rate = 1e-3;
  cfg.epochs = 300;
  const auto a = train(data, &val, init_params(NetKind::kOnset, 3), cfg);
  CHECK(a.history.train.back() < 0.05 * a.history.train.front());

  // snapshot = minimum validation loss
  const double best = *std::min_element(a.history.val.begin(), a.history.val.end());
  CHECK(a.history.val[static_cast<std::size_t>(a.history.best_epoch - 1)] == best);
  CHECK(val.loss(a.best, val.all_rows(), nullptr) == doctest::Approx(best).epsilon(1e-12));

  // reproducible; a different seed gives a different but still decreasing history
  const auto a2 = train(data, &val, init_params(NetKind::kOnset, 3), cfg);
  CHECK(a2.history.train == a.history.train);
  CHECK(a2.best.tensors == a.best.tensors);
  TrainConfig other = cfg;
  other.seed = 77;
  const auto b = train(data, &val, init_params(NetKind::kOnset, 4), other);
  CHECK(b.history.train != a.history.train);
  CHECK(spearman(a.history.train) < -0.8);
  CHECK(spearman(b.history.train) < -0.8);

  CHECK_THROWS_AS(train(OnsetDataset{}, nullptr, init_params(NetKind::kOnset, 1), cfg), DomainError);
  cfg.epochs = 0;
  CHECK_THROWS_AS(train(data, nullptr, init_params(NetKind::kOnset, 1), cfg), DomainError);
}

TEST_CASE("magnitude dataset batches share encoder inputs") {
  std::mt19937_64 rng(8);
  MagnitudeDataset d;
  for (int u = 0; u < 3; ++u) d.sch.push_back(randn(3, 441, rng));
  for (int r = 0; r < 12; ++r) d.rows.push_back({r % 3, randn(13, 1, rng).col(0), r % 41, r % 2, randn(64, 1, rng).col(0)});
  const auto b = d.batch({0, 3, 6, 1});
  CHECK(b.sch.size() == 2);
  CHECK(b.sch_of_row == std::vector<int>{0, 0, 0, 1});
  const auto p = init_params(NetKind::kMagnitude, 2);
  const Eigen::MatrixXd all = d.predict(p, d.all_rows());
  const Eigen::MatrixXd part = d.predict(p, {5});
  CHECK((all.col(5) - part.col(0)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("parameter file round trip") {
  for (auto kind : {NetKind::kMagnitude, NetKind::kOnset}) {
    const auto p = init_params(kind, 12);
    const auto path = tmp_path("params.bin");
    write_params(path, p);
    const auto q = read_params(path);
    CHECK(q.kind == kind);
    CHECK(q.shape == p.shape);
    REQUIRE(q.tensors.size() == p.tensors.size());
    for (std::size_t i = 0; i < p.tensors.size(); ++i) {
      CHECK(q.tensors[i] == p.tensors[i].cast<float>().cast<double>());
    }
    // header layout
    std::ifstream in(path, std::ios::binary);
    char magic[8];
    in.read(magic, 8);
    CHECK(std::string(magic, 7) == "HRTFNN1");
    CHECK(magic[7] == '\0');
    std::filesystem::resize_file(path, 100);
    CHECK_THROWS_AS(read_params(path), ParseError);
    std::filesystem::remove(path);
  }
  NetShape custom;
  custom.decoder_channels = {4, 8, 1};
  const auto p = init_params(NetKind::kMagnitude, 1, custom);
  write_params(tmp_path("custom.bin"), p);
  CHECK(read_params(tmp_path("custom.bin")).shape == custom);
  std::filesystem::remove(tmp_path("custom.bin"));

  NetShape broken;
  broken.encoder_channels.back() = 32;
  CHECK_THROWS_AS(init_params(NetKind::kMagnitude, 1, broken), DomainError);
  CHECK_THROWS_AS(read_params(tmp_path("missing.bin")), IoError);
}

TEST_CASE("history csv") {
  LossHistory h;
  h.train = {1.0, 0.5};
  h.val = {2.0, 1.0 / 3.0};
  const auto path = tmp_path("hist.csv");
  write_history_csv(path, h);
  std::ifstream in(path);
  std::string all((std::istreambuf_iterator<char>(in)), {});
  CHECK(all == "epoch,train_loss,val_loss\n1,1,2\n2,0.5,0.333333333\n");
  std::filesystem::remove(path);
}
