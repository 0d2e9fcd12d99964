#pragma once

#include <Eigen/Core>

namespace hrtfp::nn {

/// Batched 1D feature maps are stored as channels x (batch * length), sample
/// b occupying columns [b * length, (b + 1) * length).
struct ConvGeometry {
  int in_channels = 1;
  int out_channels = 1;
  int kernel = 3;
  int stride = 1;
  int padding = 1;

  int out_length(int length) const { return (length + 2 * padding - kernel) / stride + 1; }
};

/// Unfolds x (in x batch*length) into (in*kernel) x (batch*out_length) so the
/// convolution is one matrix product; row c*kernel + t holds tap t of channel c.
Eigen::MatrixXd im2col(const Eigen::MatrixXd& x, int batch, int length, const ConvGeometry& g);
/// Adjoint of im2col: scatters column gradients back onto the input layout.
Eigen::MatrixXd col2im(const Eigen::MatrixXd& cols, int batch, int length, const ConvGeometry& g);

/// W is out x (in*kernel), b is out x 1. Returns out x (batch*out_length) and
/// keeps what the backward pass needs in `cols`: the unfolded input, or the
/// input itself for stride-1 "same" convolutions, which run as one shifted
/// product per tap instead of unfolding.
Eigen::MatrixXd conv_forward(const Eigen::MatrixXd& w, const Eigen::MatrixXd& b, const Eigen::MatrixXd& x,
                             int batch, int length, const ConvGeometry& g, Eigen::MatrixXd& cols);
/// Accumulates dW, db; returns dx.
Eigen::MatrixXd conv_backward(const Eigen::MatrixXd& w, const Eigen::MatrixXd& cols, const Eigen::MatrixXd& dy,
                              int batch, int length, const ConvGeometry& g, Eigen::MatrixXd& dw,
                              Eigen::MatrixXd& db);

/// y = W x + b on columns.
Eigen::MatrixXd linear_forward(const Eigen::MatrixXd& w, const Eigen::MatrixXd& b, const Eigen::MatrixXd& x);
/// Accumulates dW, db; returns dx.
Eigen::MatrixXd linear_backward(const Eigen::MatrixXd& w, const Eigen::MatrixXd& x, const Eigen::MatrixXd& dy,
                                Eigen::MatrixXd& dw, Eigen::MatrixXd& db);

Eigen::MatrixXd relu(const Eigen::MatrixXd& x);
/// dy masked by y > 0 (y is the ReLU output).
Eigen::MatrixXd relu_backward(const Eigen::MatrixXd& y, const Eigen::MatrixXd& dy);

/// channels x (batch*length) -> channels x batch.
Eigen::MatrixXd avg_pool(const Eigen::MatrixXd& x, int batch, int length);
Eigen::MatrixXd avg_pool_backward(const Eigen::MatrixXd& dy, int length);

/// (channels*length) x batch <-> channels x (batch*length), feature index
/// c*length + j.
Eigen::MatrixXd to_sequence(const Eigen::MatrixXd& x, int channels, int length);
Eigen::MatrixXd from_sequence(const Eigen::MatrixXd& x, int channels, int length);

/// Mean of squared differences over all entries; DimensionError on shape mismatch.
double loss_mse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target);
/// Gradient of loss_mse with respect to pred.
Eigen::MatrixXd loss_mse_grad(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target);

}  // namespace hrtfp::nn
