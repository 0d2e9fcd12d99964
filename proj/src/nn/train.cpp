#include "hrtfp/nn/train.hpp"

#include "hrtfp/errors.hpp"
#include "hrtfp/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <string>

namespace hrtfp::nn {

AdamState adam_init(const ModelParams& p) {
  AdamState s;
  for (const auto& t : p.tensors) {
    s.m.push_back(Eigen::MatrixXd::Zero(t.rows(), t.cols()));
    s.v.push_back(Eigen::MatrixXd::Zero(t.rows(), t.cols()));
  }
  return s;
}

void adam_step(ModelParams& p, const ModelParams& grads, AdamState& s, const AdamOptions& o) {
  if (grads.tensors.size() != p.tensors.size() || s.m.size() != p.tensors.size()) {
    throw DimensionError("gradient or optimizer state does not match the parameters");
  }
  for (std::size_t i = 0; i < grads.tensors.size(); ++i) {
    if (!grads.tensors[i].allFinite()) throw DomainError("non-finite gradient in tensor " + std::to_string(i));
  }
  ++s.step;
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    const auto& g = grads.tensors[i];
    s.m[i] = o.beta1 * s.m[i] + (1.0 - o.beta1) * g;
    s.v[i] = o.beta2 * s.v[i] + (1.0 - o.beta2) * g.cwiseProduct(g);
    p.tensors[i].array() -= o.learning_rate * (s.m[i].array() / c1) / ((s.v[i].array() / c2).sqrt() + o.epsilon);
  }
}

std::vector<std::size_t> Dataset::all_rows() const {
  std::vector<std::size_t> r(size());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = i;
  return r;
}

MagnitudeBatch MagnitudeDataset::batch(const std::vector<std::size_t>& idx) const {
  MagnitudeBatch b;
  const auto n = static_cast<Eigen::Index>(idx.size());
  b.anthro.resize(kAnthroCount, n);
  b.freq = Eigen::MatrixXd::Zero(kFreqCount, n);
  b.ear = Eigen::MatrixXd::Zero(2, n);
  std::map<int, int> unique;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows.at(idx[static_cast<std::size_t>(i)]);
    auto [it, inserted] = unique.emplace(r.sch, static_cast<int>(b.sch.size()));
    if (inserted) b.sch.push_back(sch.at(static_cast<std::size_t>(r.sch)));
    b.sch_of_row.push_back(it->second);
    b.anthro.col(i) = r.anthro;
    b.freq(r.freq, i) = 1.0;
    b.ear(r.ear, i) = 1.0;
  }
  return b;
}

double MagnitudeDataset::loss(const ModelParams& p, const std::vector<std::size_t>& idx, ModelParams* grads) const {
  const auto b = batch(idx);
  Eigen::MatrixXd target(kMagnitudeOutputs, static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) target.col(static_cast<Eigen::Index>(i)) = rows[idx[i]].target;
  ForwardCache cache;
  const Eigen::MatrixXd pred = forward_magnitude(p, b, grads ? &cache : nullptr);
  if (grads) backward_magnitude(p, b, cache, loss_mse_grad(pred, target), *grads);
  return loss_mse(pred, target);
}

Eigen::MatrixXd MagnitudeDataset::predict(const ModelParams& p, const std::vector<std::size_t>& idx) const {
  return forward_magnitude(p, batch(idx));
}

OnsetBatch OnsetDataset::batch(const std::vector<std::size_t>& idx) const {
  OnsetBatch b;
  const auto n = static_cast<Eigen::Index>(idx.size());
  b.anthro.resize(kAnthroCount, n);
  b.ear = Eigen::MatrixXd::Zero(2, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows.at(idx[static_cast<std::size_t>(i)]);
    b.anthro.col(i) = r.anthro;
    b.ear(r.ear, i) = 1.0;
  }
  return b;
}

double OnsetDataset::loss(const ModelParams& p, const std::vector<std::size_t>& idx, ModelParams* grads) const {
  const auto b = batch(idx);
  Eigen::MatrixXd target(kOnsetOutputs, static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) target.col(static_cast<Eigen::Index>(i)) = rows[idx[i]].target;
  ForwardCache cache;
  const Eigen::MatrixXd pred = forward_onset(p, b, grads ? &cache : nullptr);
  if (grads) backward_onset(p, b, cache, loss_mse_grad(pred, target), *grads);
  return loss_mse(pred, target);
}

Eigen::MatrixXd OnsetDataset::predict(const ModelParams& p, const std::vector<std::size_t>& idx) const {
  return forward_onset(p, batch(idx));
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw DomainError("batch size must be >= 1");
  if (epochs < 1) throw DomainError("epochs must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw DomainError("learning rate must be >= 0");
}

std::vector<std::size_t> permutation(std::size_t n, std::uint64_t& state) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  std::mt19937_64 rng(state);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(p[i - 1], p[j]);
  }
  state = rng();
  return p;
}

TrainResult train(const Dataset& train_set, const Dataset* val_set, ModelParams init, const TrainConfig& config) {
  config.validate();
  if (train_set.size() == 0) throw DomainError("empty training set");
  if (train_set.kind() != init.kind || (val_set && val_set->kind() != init.kind)) {
    throw DimensionError("dataset and network kinds differ");
  }
  if (val_set && val_set->size() == 0) val_set = nullptr;

  TrainResult result;
  ModelParams p = std::move(init);
  ModelParams grads = zeros_like(p);
  AdamState state = adam_init(p);
  const AdamOptions adam{config.learning_rate};
  std::uint64_t shuffle_state = config.seed;
  const auto val_rows = val_set ? val_set->all_rows() : std::vector<std::size_t>{};
  double best = std::numeric_limits<double>::infinity();

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto order = permutation(train_set.size(), shuffle_state);
    double sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                    order.begin() + static_cast<std::ptrdiff_t>(end));
      // sums inside a batch run in dataset order, independent of the shuffle
      std::sort(rows.begin(), rows.end());
      grads.set_zero();
      sum += train_set.loss(p, rows, &grads) * static_cast<double>(rows.size());
      adam_step(p, grads, state, adam);
    }
    const double train_loss = sum / static_cast<double>(order.size());
    if (!std::isfinite(train_loss)) throw ConvergenceError("training loss diverged at epoch " + std::to_string(epoch));
    result.history.train.push_back(train_loss);
    double score = train_loss;
    if (val_set) {
      score = val_set->loss(p, val_rows, nullptr);
      result.history.val.push_back(score);
    }
    if (score < best) {
      best = score;
      result.best = p;
      result.history.best_epoch = epoch;
    }
  }
  if (result.history.best_epoch == 0) {
    result.best = p;
    result.history.best_epoch = config.epochs;
  }
  return result;
}

void write_history_csv(const std::filesystem::path& path, const LossHistory& h) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch,train_loss,val_loss\n";
  char buf[96];
  for (std::size_t i = 0; i < h.train.size(); ++i) {
    if (h.val.empty()) {
      std::snprintf(buf, sizeof buf, "%zu,%.9g,\n", i + 1, h.train[i]);
    } else {
      std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g\n", i + 1, h.train[i], h.val[i]);
    }
    out << buf;
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace hrtfp::nn
