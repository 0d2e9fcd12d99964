#include "hrtfp/least_squares.hpp"

#include "hrtfp/errors.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <limits>
#include <sstream>

namespace hrtfp {

LeastSquaresSolver::LeastSquaresSolver(const Eigen::MatrixXd& basis, FitOptions options)
    : rows_(basis.rows()), cols_(basis.cols()), options_(options) {
  if (cols_ == 0) throw DimensionError("least-squares basis has no columns");
  if (options_.ridge < 0.0) throw DomainError("ridge weight must be non-negative");
  if (rows_ < cols_ && options_.ridge == 0.0) {
    std::ostringstream msg;
    msg << "least-squares system is underdetermined: " << rows_ << " samples for "
        << cols_ << " coefficients";
    throw RankError(msg.str(), std::numeric_limits<double>::infinity());
  }
  if (options_.ridge > 0.0) {
    Eigen::MatrixXd augmented(rows_ + cols_, cols_);
    augmented.topRows(rows_) = basis;
    augmented.bottomRows(cols_) =
        std::sqrt(options_.ridge) * Eigen::MatrixXd::Identity(cols_, cols_);
    qr_.compute(augmented);
  } else {
    qr_.compute(basis);
  }

  const Eigen::MatrixXd r = qr_.matrixR().topLeftCorner(cols_, cols_)
                                .triangularView<Eigen::Upper>();
  const Eigen::BDCSVD<Eigen::MatrixXd> svd(r);
  const auto& sv = svd.singularValues();
  const double smax = sv(0);
  const double smin = sv(sv.size() - 1);
  condition_ = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
  if (!(condition_ <= options_.condition_bound)) {
    std::ostringstream msg;
    msg << "basis is rank deficient: condition estimate " << condition_
        << " exceeds bound " << options_.condition_bound;
    throw RankError(msg.str(), condition_);
  }
}

Eigen::MatrixXd LeastSquaresSolver::padded(const Eigen::MatrixXd& rhs) const {
  if (rhs.rows() != rows_) {
    std::ostringstream msg;
    msg << "sample count " << rhs.rows() << " does not match basis rows " << rows_;
    throw DimensionError(msg.str());
  }
  if (options_.ridge == 0.0) return rhs;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(rows_ + cols_, rhs.cols());
  out.topRows(rows_) = rhs;
  return out;
}

Eigen::VectorXd LeastSquaresSolver::solve(const Eigen::VectorXd& samples) const {
  return qr_.solve(padded(samples)).col(0);
}

Eigen::MatrixXd LeastSquaresSolver::solve(const Eigen::MatrixXd& samples) const {
  return qr_.solve(padded(samples));
}

Eigen::VectorXd least_squares_fit(const Eigen::MatrixXd& basis,
                                  const Eigen::VectorXd& samples, FitOptions options) {
  return LeastSquaresSolver(basis, options).solve(samples);
}

}  // namespace hrtfp
