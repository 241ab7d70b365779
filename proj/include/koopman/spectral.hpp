#pragma once

// Eigendecomposition of the fitted operator and the spectral expansion built
// on it: eigenfunction values, Koopman modes, prediction and truncation.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "koopman/dictionary.hpp"
#include "koopman/edmd.hpp"
#include "koopman/error.hpp"
#include "koopman/linalg.hpp"

namespace koopman {

/// Smallest reciprocal condition number of the eigenvector matrix accepted
/// as diagonalizable.
inline constexpr double kDefectiveRcond = 1e-7;

struct EigenSystem {
  CVector eigenvalues;
  CMatrix right_vectors;  // d x N, unit columns
  CMatrix left_vectors;   // d x N, scaled so that w_j^* v_j = 1
  double biorthogonality_error = 0.0;
  double eigen_residual = 0.0;  // max_j ||A v_j - lambda_j v_j||

  Eigen::Index size() const noexcept { return eigenvalues.size(); }
};

namespace detail {

/// Magnitude descending, then real part descending, then imaginary descending.
inline bool spectral_order(const Complex& a, const Complex& b) {
  const double ma = std::abs(a), mb = std::abs(b);
  if (ma != mb) return ma > mb;
  if (a.real() != b.real()) return a.real() > b.real();
  return a.imag() > b.imag();
}

inline bool is_conjugate_of(const Complex& a, const Complex& b) {
  const double scale = std::max({1.0, std::abs(a), std::abs(b)});
  return a.imag() != 0.0 && std::abs(a - std::conj(b)) <= 1e-12 * scale;
}

inline std::string format_complex(const Complex& z) {
  std::ostringstream os;
  os.precision(17);
  os << z.real() << (z.imag() < 0 ? " - " : " + ") << std::abs(z.imag()) << "i";
  return os.str();
}

}  // namespace detail

/// Full eigensystem of a real matrix with biorthonormal left/right vectors.
/// Rejects matrices whose eigenvector basis is numerically singular.
inline EigenSystem eigendecompose(const Matrix& A) {
  detail::require(A.rows() == A.cols() && A.rows() > 0, ErrorKind::ShapeMismatch,
                  "eigendecomposition needs a non-empty square matrix");
  detail::require(A.allFinite(), ErrorKind::InvalidArgument, "matrix has non-finite entries");

  Eigen::EigenSolver<Matrix> solver(A, true);
  detail::require(solver.info() == Eigen::Success, ErrorKind::DefectiveMatrix,
                  "eigenvalue iteration did not converge");
  const CVector values = solver.eigenvalues();
  const CMatrix vectors = solver.eigenvectors();
  const Eigen::Index n = values.size();

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return detail::spectral_order(values(a), values(b));
  });

  EigenSystem es;
  es.eigenvalues.resize(n);
  es.right_vectors.resize(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    es.eigenvalues(j) = values(order[static_cast<std::size_t>(j)]);
    es.right_vectors.col(j) = vectors.col(order[static_cast<std::size_t>(j)]).normalized();
  }

  Eigen::JacobiSVD<CMatrix> svd(es.right_vectors);
  const auto& sigma = svd.singularValues();
  const double rcond = sigma(0) > 0 ? sigma(n - 1) / sigma(0) : 0.0;
  if (!(rcond > kDefectiveRcond)) {
    Eigen::Index bi = 0;
    double gap = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j)
        if (std::abs(es.eigenvalues(i) - es.eigenvalues(j)) < gap) {
          gap = std::abs(es.eigenvalues(i) - es.eigenvalues(j));
          bi = i;
        }
    throw Error(ErrorKind::DefectiveMatrix,
                "eigenvectors are numerically dependent near eigenvalue " +
                    detail::format_complex(es.eigenvalues(bi)));
  }

  es.left_vectors = es.right_vectors.adjoint().partialPivLu().solve(CMatrix::Identity(n, n));

  // Make conjugate pairs exact so real inputs give real predictions.
  for (Eigen::Index j = 0; j + 1 < n; ++j) {
    if (es.eigenvalues(j).imag() > 0 &&
        detail::is_conjugate_of(es.eigenvalues(j), es.eigenvalues(j + 1))) {
      es.eigenvalues(j + 1) = std::conj(es.eigenvalues(j));
      es.right_vectors.col(j + 1) = es.right_vectors.col(j).conjugate();
      es.left_vectors.col(j + 1) = es.left_vectors.col(j).conjugate();
      ++j;
    }
  }

  es.biorthogonality_error =
      (es.left_vectors.adjoint() * es.right_vectors - CMatrix::Identity(n, n)).cwiseAbs().maxCoeff();
  const CMatrix Ac = A.cast<Complex>();
  for (Eigen::Index j = 0; j < n; ++j)
    es.eigen_residual =
        std::max(es.eigen_residual,
                 (Ac * es.right_vectors.col(j) - es.eigenvalues(j) * es.right_vectors.col(j)).norm());
  return es;
}

inline EigenSystem eigendecompose(const KoopmanMatrix& km) { return eigendecompose(km.A); }

struct EigenfunctionTable {
  CMatrix at_initial;  // M x N, phi_j at each trajectory's first column
  CMatrix at_columns;  // K x N, phi_j at every data column
};

/// phi_j(x) = w_j^* g(x) over every column of G.
inline EigenfunctionTable eigenfunction_values(const EigenSystem& es, const LiftedPair& lifted) {
  detail::require(es.left_vectors.rows() == lifted.G.rows(), ErrorKind::ShapeMismatch,
                  "eigensystem dimension does not match the dictionary");
  detail::require(!lifted.x0_columns.empty(), ErrorKind::InvalidArgument,
                  "lifted data records no initial-condition columns");
  EigenfunctionTable out;
  out.at_columns = lifted.G.transpose().cast<Complex>() * es.left_vectors.conjugate();
  out.at_initial.resize(static_cast<Eigen::Index>(lifted.x0_columns.size()), es.size());
  for (std::size_t i = 0; i < lifted.x0_columns.size(); ++i) {
    const auto col = static_cast<Eigen::Index>(lifted.x0_columns[i]);
    detail::require(col < lifted.G.cols(), ErrorKind::InvalidArgument,
                    "initial-condition column out of range");
    out.at_initial.row(static_cast<Eigen::Index>(i)) = out.at_columns.row(col);
  }
  return out;
}

/// Koopman modes: least-squares coefficients v_j with outputs ~ sum_j phi_j v_j,
/// from the eigenfunction series (K x N) and outputs (h x K).
inline CMatrix koopman_modes(const CMatrix& eigenfunction_series, const Matrix& outputs,
                             double tol = kDefaultSvdTolerance) {
  detail::require(eigenfunction_series.rows() == outputs.cols(), ErrorKind::ShapeMismatch,
                  "outputs are not aligned with the eigenfunction series");
  Eigen::JacobiSVD<CMatrix> svd(eigenfunction_series, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sigma = svd.singularValues();
  const Eigen::Index n = sigma.size();
  detail::require(eigenfunction_series.rows() >= eigenfunction_series.cols() && n > 0 &&
                      sigma(n - 1) > tol * sigma(0),
                  ErrorKind::RankDeficient,
                  "eigenfunction series are linearly dependent; reduce clustered eigenvalues "
                  "or enrich the data");
  Eigen::VectorXd inv = sigma.cwiseInverse();
  CMatrix pinv = svd.matrixV() * inv.cast<Complex>().asDiagonal() * svd.matrixU().adjoint();
  return (pinv * outputs.transpose().cast<Complex>()).transpose();
}

inline CMatrix koopman_modes(const EigenSystem& es, const LiftedPair& lifted,
                             const Matrix& outputs, double tol = kDefaultSvdTolerance) {
  return koopman_modes(eigenfunction_values(es, lifted).at_columns, outputs, tol);
}

/// Linear decode P (h x d) with outputs ~ P G in the least-squares sense.
inline Matrix decode_map(const LiftedPair& lifted, const Matrix& outputs,
                         double tol = kDefaultSvdTolerance) {
  detail::require(outputs.cols() == lifted.G.cols(), ErrorKind::ShapeMismatch,
                  "outputs are not aligned with the lifted columns");
  return outputs * pseudoinverse(lifted.G, tol);
}

using DictionaryHash = std::array<std::uint8_t, 32>;

struct SpectralTriple {
  CVector eigenvalues;          // N
  CMatrix eigenfunction_values;  // M x N
  CMatrix modes;                // h x N
  Matrix decode;                // h x d
  DictionaryHash dictionary_hash{};
  std::vector<std::string> output_names;          // h
  std::vector<std::string> initial_condition_ids;  // M

  std::size_t N() const noexcept { return static_cast<std::size_t>(eigenvalues.size()); }
  std::size_t M() const noexcept { return static_cast<std::size_t>(eigenfunction_values.rows()); }
  std::size_t h() const noexcept { return static_cast<std::size_t>(modes.rows()); }
  std::size_t d() const noexcept { return static_cast<std::size_t>(decode.cols()); }

  /// Complex entries of the triple proper: eigenvalues, the eigenfunction
  /// table and the modes.
  std::size_t triple_entry_count() const noexcept { return (1 + M() + h()) * N(); }

  void validate() const {
    const auto n = eigenvalues.size();
    detail::require(eigenfunction_values.cols() == n && modes.cols() == n,
                    ErrorKind::ShapeMismatch, "spectral triple tables disagree on N");
    detail::require(decode.rows() == modes.rows(), ErrorKind::ShapeMismatch,
                    "decode map and modes disagree on the output count");
    detail::require(output_names.empty() || output_names.size() == h(), ErrorKind::ShapeMismatch,
                    "output name count does not match h");
    detail::require(initial_condition_ids.empty() || initial_condition_ids.size() == M(),
                    ErrorKind::ShapeMismatch, "initial-condition id count does not match M");
  }

  bool operator==(const SpectralTriple& o) const {
    auto same = [](const auto& a, const auto& b) {
      return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
    };
    return same(eigenvalues, o.eigenvalues) && same(eigenfunction_values, o.eigenfunction_values) &&
           same(modes, o.modes) && same(decode, o.decode) && dictionary_hash == o.dictionary_hash &&
           output_names == o.output_names && initial_condition_ids == o.initial_condition_ids;
  }
};

/// lambda^k evaluated in polar form; exact for k = 0 and lambda = 0.
inline Complex eigen_power(const Complex& lambda, std::uint64_t k) {
  if (k == 0) return {1.0, 0.0};
  const double r = std::abs(lambda);
  if (r == 0.0) return {0.0, 0.0};
  if (lambda.imag() == 0.0) return {std::pow(lambda.real(), static_cast<double>(k)), 0.0};
  const double angle = std::remainder(static_cast<double>(k) * std::arg(lambda), 2.0 * std::numbers::pi);
  return std::polar(std::pow(r, static_cast<double>(k)), angle);
}

/// Spectral expansion h(k) = sum_j lambda_j^k phi_j(x0) v_j, with k counted
/// as steps elapsed since x0.
inline CVector predict(const SpectralTriple& triple, std::size_t x0_index, std::uint64_t k) {
  detail::require(x0_index < triple.M(), ErrorKind::InvalidArgument,
                  "initial condition " + std::to_string(x0_index) + " out of range");
  const double limit = std::log(std::numeric_limits<double>::max()) - 8.0;
  CVector out = CVector::Zero(triple.modes.rows());
  for (Eigen::Index j = 0; j < triple.eigenvalues.size(); ++j) {
    const Complex lambda = triple.eigenvalues(j);
    const Complex phi = triple.eigenfunction_values(static_cast<Eigen::Index>(x0_index), j);
    if (phi == Complex{} || triple.modes.col(j).isZero(0.0)) continue;
    const double r = std::abs(lambda);
    if (r > 1.0) {
      const double growth = static_cast<double>(k) * std::log(r) + std::log(std::abs(phi)) +
                            std::log(triple.modes.col(j).cwiseAbs().maxCoeff());
      if (growth > limit)
        throw Error(ErrorKind::Overflow, "lambda^" + std::to_string(k) + " overflows for eigenvalue " +
                                             detail::format_complex(lambda));
    }
    out += (eigen_power(lambda, k) * phi) * triple.modes.col(j);
  }
  return out;
}

/// Real part when every imaginary part is below `tol`, otherwise nothing.
inline std::optional<Vector> real_if_close(const CVector& v, double tol = 1e-8) {
  if (v.size() > 0 && v.imag().cwiseAbs().maxCoeff() >= tol) return std::nullopt;
  return Vector(v.real());
}

/// Keeps the largest-magnitude eigen-triples without splitting conjugate
/// pairs. When N_keep would cut a pair and no smaller eigenvalue can fill the
/// slot, the whole pair is kept (result size N_keep + 1).
inline SpectralTriple truncate_spectrum(const SpectralTriple& triple, std::size_t n_keep) {
  triple.validate();
  detail::require(n_keep >= 1 && n_keep <= triple.N(), ErrorKind::InvalidArgument,
                  "N_keep must lie in [1, " + std::to_string(triple.N()) + "]");

  std::vector<Eigen::Index> order(triple.N());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return detail::spectral_order(triple.eigenvalues(a), triple.eigenvalues(b));
  });

  // Units are singletons or conjugate pairs, in spectral order.
  std::vector<std::vector<Eigen::Index>> units;
  std::vector<bool> used(triple.N(), false);
  for (std::size_t p = 0; p < order.size(); ++p) {
    const Eigen::Index i = order[p];
    if (used[static_cast<std::size_t>(i)]) continue;
    used[static_cast<std::size_t>(i)] = true;
    std::vector<Eigen::Index> unit{i};
    for (std::size_t q = p + 1; q < order.size(); ++q) {
      const Eigen::Index j = order[q];
      if (!used[static_cast<std::size_t>(j)] &&
          detail::is_conjugate_of(triple.eigenvalues(i), triple.eigenvalues(j))) {
        used[static_cast<std::size_t>(j)] = true;
        unit.push_back(j);
        break;
      }
    }
    units.push_back(std::move(unit));
  }

  // Greedy by magnitude, taking a unit only when the remaining budget can
  // still be met exactly by later units.
  std::vector<std::size_t> singles_after(units.size() + 1, 0), total_after(units.size() + 1, 0);
  for (std::size_t u = units.size(); u-- > 0;) {
    singles_after[u] = singles_after[u + 1] + (units[u].size() == 1 ? 1 : 0);
    total_after[u] = total_after[u + 1] + units[u].size();
  }
  auto reachable = [&](std::size_t from, std::size_t budget) {
    return budget <= total_after[from] && (budget % 2 == 0 || singles_after[from] > 0);
  };
  // An odd budget over pairs alone rounds up to complete the last pair.
  std::size_t budget = reachable(0, n_keep) ? n_keep : n_keep + 1;
  std::vector<Eigen::Index> keep;
  for (std::size_t u = 0; u < units.size() && budget > 0; ++u) {
    if (units[u].size() <= budget && reachable(u + 1, budget - units[u].size())) {
      keep.insert(keep.end(), units[u].begin(), units[u].end());
      budget -= units[u].size();
    }
  }
  std::sort(keep.begin(), keep.end(), [&](Eigen::Index a, Eigen::Index b) {
    return std::find(order.begin(), order.end(), a) < std::find(order.begin(), order.end(), b);
  });

  SpectralTriple out;
  const auto n = static_cast<Eigen::Index>(keep.size());
  out.eigenvalues.resize(n);
  out.eigenfunction_values.resize(triple.eigenfunction_values.rows(), n);
  out.modes.resize(triple.modes.rows(), n);
  for (Eigen::Index c = 0; c < n; ++c) {
    const Eigen::Index src = keep[static_cast<std::size_t>(c)];
    out.eigenvalues(c) = triple.eigenvalues(src);
    out.eigenfunction_values.col(c) = triple.eigenfunction_values.col(src);
    out.modes.col(c) = triple.modes.col(src);
  }
  out.decode = triple.decode;
  out.dictionary_hash = triple.dictionary_hash;
  out.output_names = triple.output_names;
  out.initial_condition_ids = triple.initial_condition_ids;
  return out;
}

/// Assembles a triple from a fit: eigenfunctions at each trajectory start,
/// modes of `outputs` (h x K) and the linear decode from lifted space.
inline SpectralTriple build_spectral_triple(const EigenSystem& es, const LiftedPair& lifted,
                                            const Matrix& outputs,
                                            double tol = kDefaultSvdTolerance) {
  EigenfunctionTable table = eigenfunction_values(es, lifted);
  SpectralTriple triple;
  triple.eigenvalues = es.eigenvalues;
  triple.modes = koopman_modes(table.at_columns, outputs, tol);
  triple.eigenfunction_values = std::move(table.at_initial);
  triple.decode = decode_map(lifted, outputs, tol);
  return triple;
}

}  // namespace koopman
