#pragma once

#include <Eigen/Core>
#include <Eigen/QR>

namespace hrtfp {

struct FitOptions {
  /// Tikhonov weight; 0 solves the plain least-squares problem.
  double ridge = 0.0;
  /// Fits whose basis condition number exceeds this bound are rejected.
  double condition_bound = 1e8;
};

/// Factorizes a basis once and solves any number of right-hand sides.
/// The factorization is a column-pivoted Householder QR; the condition
/// number reported is the exact 2-norm condition of the (possibly
/// ridge-augmented) basis, computed from the singular values of R.
class LeastSquaresSolver {
 public:
  explicit LeastSquaresSolver(const Eigen::MatrixXd& basis, FitOptions options = {});

  Eigen::VectorXd solve(const Eigen::VectorXd& samples) const;
  Eigen::MatrixXd solve(const Eigen::MatrixXd& samples) const;

  double condition() const noexcept { return condition_; }
  Eigen::Index rows() const noexcept { return rows_; }
  Eigen::Index cols() const noexcept { return cols_; }

 private:
  Eigen::MatrixXd padded(const Eigen::MatrixXd& rhs) const;

  Eigen::Index rows_;
  Eigen::Index cols_;
  FitOptions options_;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_;
  double condition_ = 0.0;
};

/// c minimizing ||f - Y c||_2.
Eigen::VectorXd least_squares_fit(const Eigen::MatrixXd& basis,
                                  const Eigen::VectorXd& samples,
                                  FitOptions options = {});

}  // namespace hrtfp
