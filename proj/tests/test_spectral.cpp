#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "koopman/spectral.hpp"
#include "support/oracles.hpp"

using namespace koopman;
using namespace koopman::testing;

namespace {

Matrix rotation(double th) {
  return (Matrix(2, 2) << std::cos(th), -std::sin(th), std::sin(th), std::cos(th)).finished();
}

struct LinearFit {
  TrajectorySet data;
  LiftedPair lifted;
  KoopmanMatrix km;
  EigenSystem es;
};

LinearFit fit_linear(const Matrix& A, const std::vector<Eigen::VectorXd>& starts, std::size_t len) {
  LinearFit f;
  f.data = linear_trajectories(A, starts, len);
  f.lifted = lift_trajectories(identity_dictionary(static_cast<std::size_t>(A.rows())), f.data);
  f.km = fit_koopman_matrix(f.lifted);
  f.es = eigendecompose(f.km);
  return f;
}

SpectralTriple scalar_triple(Complex lambda, Complex phi, Complex v) {
  SpectralTriple t;
  t.eigenvalues = CVector::Constant(1, lambda);
  t.eigenfunction_values = CMatrix::Constant(1, 1, phi);
  t.modes = CMatrix::Constant(1, 1, v);
  t.decode = Matrix::Identity(1, 1);
  return t;
}

}  // namespace

TEST(Eigendecompose, Scalar) {
  EigenSystem es = eigendecompose(Matrix::Constant(1, 1, 0.9));
  EXPECT_EQ(es.eigenvalues(0), Complex(0.9, 0));
  EXPECT_NEAR(std::abs(es.right_vectors(0, 0)), 1.0, 1e-15);
  EXPECT_NEAR(std::abs(es.left_vectors(0, 0) - 1.0 / std::conj(es.right_vectors(0, 0))), 0.0, 1e-15);
}

TEST(Eigendecompose, RotationSpectrum) {
  EigenSystem es = eigendecompose(rotation(std::numbers::pi / 4));
  EXPECT_LT(std::abs(es.eigenvalues(0) - std::polar(1.0, std::numbers::pi / 4)), 1e-14);
  EXPECT_LT(std::abs(es.eigenvalues(1) - std::polar(1.0, -std::numbers::pi / 4)), 1e-14);
  EXPECT_EQ(es.eigenvalues(1), std::conj(es.eigenvalues(0)));
  EXPECT_LT(es.biorthogonality_error, 1e-12);
}

TEST(Eigendecompose, ConstructedSimilarity) {
  Rng rng(17);
  auto c = construct_diagonalizable(rng, {{0.9, 0}, {0.5, 0}, {-0.3, 0}});
  EigenSystem es = eigendecompose(c.A);
  EXPECT_NEAR(es.eigenvalues(0).real(), 0.9, 1e-10);
  EXPECT_NEAR(es.eigenvalues(1).real(), 0.5, 1e-10);
  EXPECT_NEAR(es.eigenvalues(2).real(), -0.3, 1e-10);
  EXPECT_LT(es.eigenvalues.imag().cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT(es.biorthogonality_error, 1e-10);
}

TEST(Eigendecompose, OrderingBreaksMagnitudeTiesByRealThenImaginary) {
  Matrix A = Matrix::Zero(4, 4);
  A(0, 0) = -0.5;
  A(1, 1) = 0.5;
  A.block(2, 2, 2, 2) = 0.5 * rotation(std::numbers::pi / 2);
  EigenSystem es = eigendecompose(A);
  EXPECT_EQ(es.eigenvalues(0), Complex(0.5, 0));
  EXPECT_NEAR(es.eigenvalues(1).imag(), 0.5, 1e-15);
  EXPECT_NEAR(es.eigenvalues(2).imag(), -0.5, 1e-15);
  EXPECT_EQ(es.eigenvalues(3), Complex(-0.5, 0));
}

TEST(Eigendecompose, RejectsJordanBlock) {
  Matrix J(2, 2);
  J << 0.7, 1.0, 0.0, 0.7;
  try {
    eigendecompose(J);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DefectiveMatrix);
    EXPECT_NE(std::string(e.what()).find("near eigenvalue 0."), std::string::npos);
  }
}

TEST(EigenfunctionValues, ScalarInitialCondition) {
  TrajectorySet set;
  set.feature_names = {"x"};
  set.trajectories.push_back(make_trajectory("a", {{2.0}, {1.8}, {1.62}}));
  auto lifted = lift_trajectories(identity_dictionary(1), set);
  EigenSystem es = eigendecompose(Matrix::Constant(1, 1, 0.9));
  auto table = eigenfunction_values(es, lifted);
  EXPECT_NEAR(std::abs(table.at_initial(0, 0) * es.right_vectors(0, 0) - 2.0), 0.0, 1e-15);
}

TEST(EigenfunctionValues, EvolveGeometricallyOnExactData) {
  Rng rng(5);
  auto c = construct_diagonalizable(rng, {{0.8, 0}, std::polar(0.7, 1.0)});
  auto f = fit_linear(c.A, {Vector3(1, -0.5, 0.25)}, 25);
  auto table = eigenfunction_values(f.es, f.lifted);
  for (Eigen::Index k = 0; k + 1 < table.at_columns.rows(); ++k)
    for (Eigen::Index j = 0; j < f.es.size(); ++j)
      EXPECT_LT(std::abs(table.at_columns(k + 1, j) - f.es.eigenvalues(j) * table.at_columns(k, j)),
                1e-8);
}

TEST(EigenfunctionValues, RotationModulusIsConstant) {
  auto f = fit_linear(rotation(std::numbers::pi / 4), {Vector2(1.0, 0.3)}, 17);
  auto table = eigenfunction_values(f.es, f.lifted);
  for (Eigen::Index j = 0; j < 2; ++j)
    for (Eigen::Index k = 0; k < table.at_columns.rows(); ++k)
      EXPECT_NEAR(std::abs(table.at_columns(k, j)), std::abs(table.at_columns(0, j)), 1e-8);
}

TEST(EigenfunctionValues, MissingInitialColumns) {
  LiftedPair lifted;
  lifted.G = Matrix::Identity(1, 1);
  lifted.G_plus = Matrix::Identity(1, 1);
  EXPECT_THROW(eigenfunction_values(eigendecompose(Matrix::Identity(1, 1)), lifted), Error);
}

TEST(KoopmanModes, ScalarReconstruction) {
  TrajectorySet set;
  set.feature_names = {"x"};
  set.trajectories.push_back(make_trajectory("a", {{2.0}, {1.8}, {1.62}}));
  auto lifted = lift_trajectories(identity_dictionary(1), set);
  EigenSystem es = eigendecompose(fit_koopman_matrix(lifted));
  auto table = eigenfunction_values(es, lifted);
  CMatrix v = koopman_modes(table.at_columns, lifted.G);
  EXPECT_NEAR(std::abs(table.at_initial(0, 0) * v(0, 0) - 2.0), 0.0, 1e-14);
  EXPECT_NEAR(std::abs(v(0, 0) - es.right_vectors(0, 0)), 0.0, 1e-14);
}

TEST(KoopmanModes, LinearInOutputs) {
  Rng rng(8);
  auto c = construct_diagonalizable(rng, {{0.9, 0}, {0.4, 0}});
  auto f = fit_linear(c.A, {Vector2(1, 2), Vector2(-1, 0.5)}, 10);
  auto table = eigenfunction_values(f.es, f.lifted);
  CMatrix v1 = koopman_modes(table.at_columns, f.lifted.G);
  CMatrix v2 = koopman_modes(table.at_columns, 2.0 * f.lifted.G);
  EXPECT_LT((v2 - 2.0 * v1).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(KoopmanModes, DiagonalOperatorGivesStandardBasis) {
  Matrix A = Vector2(0.9, 0.5).asDiagonal();
  auto f = fit_linear(A, {Vector2(1, 1), Vector2(2, -1)}, 12);
  auto table = eigenfunction_values(f.es, f.lifted);
  CMatrix v = koopman_modes(table.at_columns, f.lifted.G);
  // Eigenvectors of a diagonal matrix are the axes; fix the sign freedom.
  for (Eigen::Index j = 0; j < 2; ++j) {
    Eigen::Index axis;
    v.col(j).cwiseAbs().maxCoeff(&axis);
    CVector e = CVector::Zero(2);
    e(axis) = v(axis, j) / std::abs(v(axis, j));
    EXPECT_LT((v.col(j) - e).cwiseAbs().maxCoeff(), 1e-10);
  }
  EXPECT_LT(std::abs(std::abs(v(0, 0)) - 1.0), 1e-10);
}

TEST(KoopmanModes, RankDeficientSeriesIsRejected) {
  CMatrix phi(3, 2);
  phi << 1, 2, 2, 4, 3, 6;
  try {
    koopman_modes(phi, Matrix::Ones(1, 3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::RankDeficient);
  }
}

TEST(Predict, GeometricDecay) {
  auto t = scalar_triple(0.5, 1.0, 1.0);
  for (std::uint64_t k = 0; k < 10; ++k)
    EXPECT_DOUBLE_EQ(predict(t, 0, k)(0).real(), std::pow(0.5, static_cast<double>(k)));
}

TEST(Predict, TimeZeroReconstructsInitialOutputs) {
  Rng rng(21);
  auto c = construct_diagonalizable(rng, {{0.95, 0}, std::polar(0.6, 2.0)});
  auto f = fit_linear(c.A, {Vector3(1, 0, 0), Vector3(0, 1, 0), Vector3(0, 0, 1)}, 15);
  SpectralTriple t = build_spectral_triple(f.es, f.lifted, f.lifted.G);
  for (std::size_t i = 0; i < t.M(); ++i) {
    auto h0 = real_if_close(predict(t, i, 0));
    ASSERT_TRUE(h0);
    Vector g0 = f.lifted.G.col(static_cast<Eigen::Index>(f.lifted.x0_columns[i]));
    EXPECT_LT((*h0 - t.decode * g0).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(Predict, MatchesMatrixPowerIteration) {
  Rng rng(22);
  auto c = construct_diagonalizable(rng, {std::polar(0.97, 0.4), {-0.8, 0}});
  auto f = fit_linear(c.A, {Vector3(1, 2, 3), Vector3(-1, 0.5, 0)}, 20);
  SpectralTriple t = build_spectral_triple(f.es, f.lifted, f.lifted.G);
  for (std::size_t i = 0; i < t.M(); ++i) {
    Vector g = f.lifted.G.col(static_cast<Eigen::Index>(f.lifted.x0_columns[i]));
    for (std::uint64_t k = 0; k <= 100; ++k) {
      Vector direct = t.decode * g;
      auto h = real_if_close(predict(t, i, k));
      ASSERT_TRUE(h);
      EXPECT_LE((*h - direct).norm(), 1e-6 * direct.norm()) << "k = " << k;
      g = c.A * g;
    }
  }
}

TEST(Predict, OverflowNamesTheEigenvalue) {
  auto t = scalar_triple(10.0, 1.0, 1.0);
  try {
    predict(t, 0, 400);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Overflow);
    EXPECT_NE(std::string(e.what()).find("10"), std::string::npos);
  }
  EXPECT_THROW(predict(t, 1, 0), Error);
}

TEST(TruncateSpectrum, KeepAllIsIdentity) {
  SpectralTriple t;
  t.eigenvalues = (CVector(3) << Complex(0.9, 0), std::polar(0.5, 1.0), std::polar(0.5, -1.0)).finished();
  t.eigenfunction_values = CMatrix::Random(2, 3);
  t.modes = CMatrix::Random(2, 3);
  t.decode = Matrix::Random(2, 2);
  EXPECT_EQ(truncate_spectrum(t, 3), t);
  EXPECT_THROW(truncate_spectrum(t, 0), Error);
  EXPECT_THROW(truncate_spectrum(t, 4), Error);
}

TEST(TruncateSpectrum, PairPreservationCanDisplaceLargerEigenvalue) {
  SpectralTriple t;
  const double th = std::numbers::pi / 3;
  t.eigenvalues = (CVector(3) << Complex(0.9, 0), std::polar(0.5, th), std::polar(0.5, -th)).finished();
  t.eigenfunction_values = CMatrix::Ones(1, 3);
  t.modes = CMatrix::Ones(1, 3);
  t.decode = Matrix::Ones(1, 1);
  SpectralTriple r = truncate_spectrum(t, 2);
  ASSERT_EQ(r.N(), 2u);
  EXPECT_EQ(r.eigenvalues(0), std::polar(0.5, th));
  EXPECT_EQ(r.eigenvalues(1), std::polar(0.5, -th));
  SpectralTriple one = truncate_spectrum(t, 1);
  ASSERT_EQ(one.N(), 1u);
  EXPECT_EQ(one.eigenvalues(0), Complex(0.9, 0));
}

TEST(TruncateSpectrum, OddBudgetOverPairsKeepsWholePair) {
  SpectralTriple t;
  t.eigenvalues = (CVector(2) << std::polar(0.5, 1.0), std::polar(0.5, -1.0)).finished();
  t.eigenfunction_values = CMatrix::Ones(1, 2);
  t.modes = CMatrix::Ones(1, 2);
  t.decode = Matrix::Ones(1, 1);
  EXPECT_EQ(truncate_spectrum(t, 1).N(), 2u);
}

TEST(TruncateSpectrum, LargestMagnitudesBeatEveryOtherSubset) {
  // Symmetric operator: orthogonal modes, so dropping an eigenvalue costs
  // |phi|^2 sum_k |lambda|^{2k}, smallest for the smallest magnitudes.
  Rng rng(31);
  Matrix Q = random_orthonormal(rng, 4, 4);
  Vector lambdas(4);
  lambdas << 0.95, -0.7, 0.5, 0.2;
  Matrix A = Q * lambdas.asDiagonal() * Q.transpose();
  std::vector<Eigen::VectorXd> starts{Q * Vector4(1, 1, 1, 1), Q * Vector4(1, -1, 1, -1) };
  auto f = fit_linear(A, starts, 12);
  SpectralTriple full = build_spectral_triple(f.es, f.lifted, f.lifted.G);

  auto error_of = [&](const SpectralTriple& t) {
    double e = 0;
    for (std::size_t i = 0; i < t.M(); ++i)
      for (std::uint64_t k = 0; k <= 60; ++k) e += (predict(t, i, k) - predict(full, i, k)).squaredNorm();
    return e;
  };
  for (std::size_t keep = 1; keep < 4; ++keep) {
    const double ours = error_of(truncate_spectrum(full, keep));
    for (unsigned mask = 1; mask < 15; ++mask) {
      if (static_cast<std::size_t>(__builtin_popcount(mask)) != keep) continue;
      SpectralTriple sub = full;
      std::vector<Eigen::Index> cols;
      for (Eigen::Index j = 0; j < 4; ++j)
        if (mask & (1u << j)) cols.push_back(j);
      sub.eigenvalues = full.eigenvalues(cols);
      sub.eigenfunction_values = full.eigenfunction_values(Eigen::all, cols);
      sub.modes = full.modes(Eigen::all, cols);
      EXPECT_LE(ours, error_of(sub) + 1e-12) << "keep " << keep << " mask " << mask;
    }
  }
}
