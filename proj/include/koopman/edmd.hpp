#pragma once

// Least-squares fit of the finite-section Koopman matrix.

#include <cmath>
#include <limits>

#include "koopman/dictionary.hpp"
#include "koopman/error.hpp"
#include "koopman/linalg.hpp"

namespace koopman {

inline constexpr double kDefaultSvdTolerance = 1e-10;

struct PseudoInverse {
  Matrix inverse;
  Eigen::Index rank = 0;
  double sigma_max = 0.0;
  double sigma_min_retained = 0.0;
};

/// SVD pseudoinverse; singular values at or below tol * sigma_max count as zero.
inline PseudoInverse pseudoinverse_with_rank(const Eigen::Ref<const Matrix>& m, double tol) {
  detail::require(m.size() > 0, ErrorKind::InvalidArgument, "pseudoinverse of an empty matrix");
  detail::require(tol >= 0.0 && std::isfinite(tol), ErrorKind::InvalidArgument,
                  "pseudoinverse tolerance must be finite and non-negative");
  detail::require(m.allFinite(), ErrorKind::InvalidArgument,
                  "pseudoinverse of a matrix with non-finite entries");

  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sigma = svd.singularValues();
  PseudoInverse out;
  out.sigma_max = sigma.size() > 0 ? sigma(0) : 0.0;
  const double cutoff = tol * out.sigma_max;
  Vector inv = Vector::Zero(sigma.size());
  for (Eigen::Index i = 0; i < sigma.size(); ++i) {
    if (sigma(i) > cutoff && sigma(i) > 0.0) {
      inv(i) = 1.0 / sigma(i);
      out.sigma_min_retained = sigma(i);
      ++out.rank;
    }
  }
  out.inverse = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
  return out;
}

inline Matrix pseudoinverse(const Eigen::Ref<const Matrix>& m, double tol = kDefaultSvdTolerance) {
  return pseudoinverse_with_rank(m, tol).inverse;
}

struct KoopmanMatrix {
  Matrix A;
  double fit_residual = 0.0;
  Eigen::Index rank_used = 0;
  double svd_tolerance = kDefaultSvdTolerance;
  /// sigma_max / sigma_min over the retained singular values of G.
  double condition = 0.0;
};

/// A = G+ pinv(G): the minimal-Frobenius-norm minimiser of ||G+ - B G||_F.
inline KoopmanMatrix fit_koopman_matrix(const LiftedPair& lifted,
                                        double tol = kDefaultSvdTolerance) {
  detail::require(lifted.G.cols() >= 1, ErrorKind::InvalidArgument, "no data columns");
  detail::require(lifted.G.rows() == lifted.G_plus.rows() &&
                      lifted.G.cols() == lifted.G_plus.cols(),
                  ErrorKind::ShapeMismatch, "G and G+ differ in shape");
  PseudoInverse pinv = pseudoinverse_with_rank(lifted.G, tol);
  KoopmanMatrix out;
  out.A = lifted.G_plus * pinv.inverse;
  out.fit_residual = (lifted.G_plus - out.A * lifted.G).norm();
  out.rank_used = pinv.rank;
  out.svd_tolerance = tol;
  out.condition = pinv.rank > 0 ? pinv.sigma_max / pinv.sigma_min_retained
                                : std::numeric_limits<double>::infinity();
  return out;
}

/// Per-row ||G+[j,:] - (A G)[j,:]|| / max(1, ||G+[j,:]||). Rows that close
/// linearly over the dictionary sit at round-off level.
inline Vector residual_report(const LiftedPair& lifted, const KoopmanMatrix& km) {
  detail::require(km.A.rows() == lifted.G.rows() && km.A.cols() == lifted.G.rows() &&
                      lifted.G.cols() == lifted.G_plus.cols() &&
                      lifted.G.rows() == lifted.G_plus.rows(),
                  ErrorKind::ShapeMismatch, "Koopman matrix does not match the lifted data");
  Matrix diff = lifted.G_plus - km.A * lifted.G;
  Vector out(diff.rows());
  for (Eigen::Index j = 0; j < diff.rows(); ++j)
    out(j) = diff.row(j).norm() / std::max(1.0, lifted.G_plus.row(j).norm());
  return out;
}

}  // namespace koopman
