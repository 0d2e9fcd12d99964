#include "hrtfp/nn/layers.hpp"

#include "hrtfp/errors.hpp"

namespace hrtfp::nn {

Eigen::MatrixXd im2col(const Eigen::MatrixXd& x, int batch, int length, const ConvGeometry& g) {
  if (x.rows() != g.in_channels || x.cols() != static_cast<Eigen::Index>(batch) * length) {
    throw DimensionError("convolution input shape mismatch");
  }
  const int lout = g.out_length(length);
  Eigen::MatrixXd cols(g.in_channels * g.kernel, static_cast<Eigen::Index>(batch) * lout);
  for (int b = 0; b < batch; ++b) {
    for (int j = 0; j < lout; ++j) {
      const Eigen::Index col = static_cast<Eigen::Index>(b) * lout + j;
      for (int t = 0; t < g.kernel; ++t) {
        const int src = j * g.stride + t - g.padding;
        const bool inside = src >= 0 && src < length;
        const Eigen::Index xc = static_cast<Eigen::Index>(b) * length + src;
        for (int c = 0; c < g.in_channels; ++c) cols(c * g.kernel + t, col) = inside ? x(c, xc) : 0.0;
      }
    }
  }
  return cols;
}

Eigen::MatrixXd col2im(const Eigen::MatrixXd& cols, int batch, int length, const ConvGeometry& g) {
  const int lout = g.out_length(length);
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(g.in_channels, static_cast<Eigen::Index>(batch) * length);
  for (int b = 0; b < batch; ++b) {
    for (int j = 0; j < lout; ++j) {
      const Eigen::Index col = static_cast<Eigen::Index>(b) * lout + j;
      for (int t = 0; t < g.kernel; ++t) {
        const int src = j * g.stride + t - g.padding;
        if (src < 0 || src >= length) continue;
        const Eigen::Index xc = static_cast<Eigen::Index>(b) * length + src;
        for (int c = 0; c < g.in_channels; ++c) x(c, xc) += cols(c * g.kernel + t, col);
      }
    }
  }
  return x;
}

namespace {

// Stride 1 with "same" padding: tap t reads the input shifted by s = t - pad
// columns. Shifting the whole batch at once leaks s columns across every
// sample boundary; those contributions are removed afterwards.
bool is_same_conv(const ConvGeometry& g) { return g.stride == 1 && 2 * g.padding == g.kernel - 1; }

Eigen::MatrixXd tap(const Eigen::MatrixXd& w, const ConvGeometry& g, int t) {
  Eigen::MatrixXd wt(w.rows(), g.in_channels);
  for (int c = 0; c < g.in_channels; ++c) wt.col(c) = w.col(c * g.kernel + t);
  return wt;
}

// Calls apply(out0, in0, m) for the column ranges with out[i] reading in[i + s].
template <typename Apply>
void shifted(Eigen::Index n, int s, Apply apply) {
  if (s == 0) {
    apply(0, 0, n);
    return;
  }
  const Eigen::Index m = n - std::abs(s);
  if (m <= 0) return;
  apply(s > 0 ? 0 : -s, s > 0 ? s : 0, m);
}

}  // namespace

Eigen::MatrixXd conv_forward(const Eigen::MatrixXd& w, const Eigen::MatrixXd& b, const Eigen::MatrixXd& x,
                             int batch, int length, const ConvGeometry& g, Eigen::MatrixXd& cols) {
  if (!is_same_conv(g)) {
    cols = im2col(x, batch, length, g);
    Eigen::MatrixXd y = w * cols;
    y.colwise() += b.col(0);
    return y;
  }
  if (x.rows() != g.in_channels || x.cols() != static_cast<Eigen::Index>(batch) * length) {
    throw DimensionError("convolution input shape mismatch");
  }
  cols = x;
  const Eigen::Index n = x.cols();
  Eigen::MatrixXd y(w.rows(), n);
  y.colwise() = b.col(0);
  for (int t = 0; t < g.kernel; ++t) {
    const int s = t - g.padding;
    const Eigen::MatrixXd wt = tap(w, g, t);
    shifted(n, s, [&](Eigen::Index out0, Eigen::Index in0, Eigen::Index m) {
      y.middleCols(out0, m).noalias() += wt * x.middleCols(in0, m);
    });
    // output column j of a sample must not read across its boundary
    for (int bb = 0; bb < batch; ++bb) {
      const Eigen::Index base = static_cast<Eigen::Index>(bb) * length;
      for (int j = 0; j < length; ++j) {
        const int src = j + s;
        if (src >= 0 && src < length) continue;
        const Eigen::Index in = base + src;
        if (in < 0 || in >= n) continue;
        y.col(base + j).noalias() -= wt * x.col(in);
      }
    }
  }
  return y;
}

Eigen::MatrixXd conv_backward(const Eigen::MatrixXd& w, const Eigen::MatrixXd& cols, const Eigen::MatrixXd& dy,
                              int batch, int length, const ConvGeometry& g, Eigen::MatrixXd& dw,
                              Eigen::MatrixXd& db) {
  db.col(0) += dy.rowwise().sum();
  if (!is_same_conv(g)) {
    dw.noalias() += dy * cols.transpose();
    return col2im(w.transpose() * dy, batch, length, g);
  }
  const Eigen::MatrixXd& x = cols;
  const Eigen::Index n = x.cols();
  Eigen::MatrixXd dx = Eigen::MatrixXd::Zero(g.in_channels, n);
  for (int t = 0; t < g.kernel; ++t) {
    const int s = t - g.padding;
    const Eigen::MatrixXd wt = tap(w, g, t);
    Eigen::MatrixXd dwt = Eigen::MatrixXd::Zero(w.rows(), g.in_channels);
    shifted(n, s, [&](Eigen::Index out0, Eigen::Index in0, Eigen::Index m) {
      dwt.noalias() += dy.middleCols(out0, m) * x.middleCols(in0, m).transpose();
      dx.middleCols(in0, m).noalias() += wt.transpose() * dy.middleCols(out0, m);
    });
    for (int bb = 0; bb < batch; ++bb) {
      const Eigen::Index base = static_cast<Eigen::Index>(bb) * length;
      for (int j = 0; j < length; ++j) {
        const int src = j + s;
        if (src >= 0 && src < length) continue;
        const Eigen::Index in = base + src;
        if (in < 0 || in >= n) continue;
        dwt.noalias() -= dy.col(base + j) * x.col(in).transpose();
        dx.col(in).noalias() -= wt.transpose() * dy.col(base + j);
      }
    }
    for (int c = 0; c < g.in_channels; ++c) dw.col(c * g.kernel + t) += dwt.col(c);
  }
  return dx;
}

Eigen::MatrixXd linear_forward(const Eigen::MatrixXd& w, const Eigen::MatrixXd& b, const Eigen::MatrixXd& x) {
  if (x.rows() != w.cols()) throw DimensionError("linear layer input shape mismatch");
  Eigen::MatrixXd y = w * x;
  y.colwise() += b.col(0);
  return y;
}

Eigen::MatrixXd linear_backward(const Eigen::MatrixXd& w, const Eigen::MatrixXd& x, const Eigen::MatrixXd& dy,
                                Eigen::MatrixXd& dw, Eigen::MatrixXd& db) {
  dw.noalias() += dy * x.transpose();
  db.col(0) += dy.rowwise().sum();
  return w.transpose() * dy;
}

Eigen::MatrixXd relu(const Eigen::MatrixXd& x) { return x.cwiseMax(0.0); }

Eigen::MatrixXd relu_backward(const Eigen::MatrixXd& y, const Eigen::MatrixXd& dy) {
  return (y.array() > 0.0).select(dy, 0.0);
}

Eigen::MatrixXd avg_pool(const Eigen::MatrixXd& x, int batch, int length) {
  Eigen::MatrixXd y(x.rows(), batch);
  for (int b = 0; b < batch; ++b) y.col(b) = x.middleCols(static_cast<Eigen::Index>(b) * length, length).rowwise().mean();
  return y;
}

Eigen::MatrixXd avg_pool_backward(const Eigen::MatrixXd& dy, int length) {
  Eigen::MatrixXd dx(dy.rows(), dy.cols() * length);
  for (Eigen::Index b = 0; b < dy.cols(); ++b) {
    dx.middleCols(b * length, length) = (dy.col(b) / length).replicate(1, length);
  }
  return dx;
}

Eigen::MatrixXd to_sequence(const Eigen::MatrixXd& x, int channels, int length) {
  if (x.rows() != static_cast<Eigen::Index>(channels) * length) throw DimensionError("reshape size mismatch");
  Eigen::MatrixXd y(channels, x.cols() * length);
  for (Eigen::Index b = 0; b < x.cols(); ++b) {
    for (int c = 0; c < channels; ++c) {
      y.block(c, b * length, 1, length) = x.block(static_cast<Eigen::Index>(c) * length, b, length, 1).transpose();
    }
  }
  return y;
}

Eigen::MatrixXd from_sequence(const Eigen::MatrixXd& x, int channels, int length) {
  if (x.rows() != channels || x.cols() % length != 0) throw DimensionError("reshape size mismatch");
  const Eigen::Index batch = x.cols() / length;
  Eigen::MatrixXd y(static_cast<Eigen::Index>(channels) * length, batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (int c = 0; c < channels; ++c) {
      y.block(static_cast<Eigen::Index>(c) * length, b, length, 1) = x.block(c, b * length, 1, length).transpose();
    }
  }
  return y;
}

double loss_mse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw DimensionError("prediction and target shapes differ");
  }
  if (pred.size() == 0) throw DimensionError("empty loss");
  return (pred - target).squaredNorm() / static_cast<double>(pred.size());
}

Eigen::MatrixXd loss_mse_grad(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw DimensionError("prediction and target shapes differ");
  }
  return 2.0 * (pred - target) / static_cast<double>(pred.size());
}

}  // namespace hrtfp::nn
