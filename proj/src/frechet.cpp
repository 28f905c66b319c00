// SPDX-License-Identifier: Apache-2.0

#include <Eigen/Eigenvalues>
#include <cmath>

#include "twin/eval.hpp"

namespace twin {

namespace {

constexpr double kNegativeEigenTolerance = 1e-8;

Eigen::MatrixXd to_matrix(const std::vector<std::vector<double>>& vectors) {
  if (vectors.size() < 2) throw UserError("frechet distance needs at least 2 vectors per set");
  const std::size_t dim = vectors.front().size();
  if (dim == 0) throw UserError("frechet distance needs non-empty vectors");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(vectors.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    if (vectors[i].size() != dim) throw UserError("frechet distance: inconsistent vector dimension within a set");
    for (std::size_t k = 0; k < dim; ++k) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = vectors[i][k];
    }
  }
  return m;
}

// Eigenvalues of a symmetric PSD matrix with tiny negative noise clamped.
// Values below -tolerance (scaled by the spectrum) mean the input was not PSD.
Eigen::VectorXd clamped_eigenvalues(const Eigen::VectorXd& values, const char* what) {
  const double scale = std::max(1.0, values.cwiseAbs().maxCoeff());
  Eigen::VectorXd out = values;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    if (out(i) < -kNegativeEigenTolerance * scale) {
      throw std::runtime_error(std::string("frechet distance: ") + what + " has a negative eigenvalue " +
                               std::to_string(out(i)));
    }
    out(i) = std::max(0.0, out(i));
  }
  return out;
}

}  // namespace

GaussianMoments gaussian_moments(const std::vector<std::vector<double>>& vectors) {
  const Eigen::MatrixXd x = to_matrix(vectors);
  GaussianMoments g;
  g.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - g.mean.transpose();
  g.cov = (centered.transpose() * centered) / static_cast<double>(x.rows() - 1);
  return g;
}

double frechet_distance(const GaussianMoments& a, const GaussianMoments& b) {
  if (a.mean.size() != b.mean.size()) throw UserError("frechet distance: dimension mismatch between sets");

  // tr((S_a S_b)^(1/2)) = sum of sqrt(eig(S_a^(1/2) S_b S_a^(1/2))); the
  // symmetric form keeps the spectrum real.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig_a(a.cov);
  const Eigen::VectorXd la = clamped_eigenvalues(eig_a.eigenvalues(), "first covariance");
  const Eigen::MatrixXd sqrt_a = eig_a.eigenvectors() * la.cwiseSqrt().asDiagonal() * eig_a.eigenvectors().transpose();
  Eigen::MatrixXd middle = sqrt_a * b.cov * sqrt_a;
  middle = 0.5 * (middle + middle.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig_m(middle, Eigen::EigenvaluesOnly);
  const Eigen::VectorXd lm = clamped_eigenvalues(eig_m.eigenvalues(), "covariance product");
  const double tr_sqrt = lm.cwiseSqrt().sum();

  const double d2 = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * tr_sqrt;
  const double scale = std::max(1.0, a.cov.trace() + b.cov.trace());
  if (d2 < -kNegativeEigenTolerance * scale) {
    throw std::runtime_error("frechet distance: negative result " + std::to_string(d2));
  }
  return std::max(0.0, d2);
}

double frechet_distance(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b) {
  if (!a.empty() && !b.empty() && a.front().size() != b.front().size()) {
    throw UserError("frechet distance: dimension mismatch between sets");
  }
  return frechet_distance(gaussian_moments(a), gaussian_moments(b));
}

}  // namespace twin
