// Fits x+ = x + sin x, y+ = y + x on the dictionary {x, sin x, y} and prints
// the operator, the row residuals and the closed representations.

#include <cmath>
#include <cstdio>
#include <random>

#include "koopman/koopman.hpp"

using namespace koopman;

int main() {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> ux(-3.0, 3.0), uy(-1.0, 1.0);
  TrajectorySet data;
  data.feature_names = {"x", "y"};
  for (int t = 0; t < 20; ++t) {
    double x = ux(gen), y = uy(gen);
    std::vector<std::vector<double>> rows;
    for (int k = 0; k <= 50; ++k) {
      rows.push_back({x, y});
      const double xn = x + std::sin(x);
      y += x;
      x = xn;
    }
    data.trajectories.push_back(make_trajectory("ic" + std::to_string(t), rows));
  }

  Dictionary dict(2);
  const auto f1 = dict.add("f1", kind::Coordinate{0});
  dict.add("f2", kind::Sine{f1});
  dict.add("f3", kind::Coordinate{1});

  const LiftedPair lifted = lift_trajectories(dict, data);
  const KoopmanMatrix km = fit_koopman_matrix(lifted);
  const Vector residuals = residual_report(lifted, km);

  std::printf("fitted operator (rank %ld):\n", static_cast<long>(km.rank_used));
  for (Eigen::Index i = 0; i < km.A.rows(); ++i)
    std::printf("  %-3s [% .6f % .6f % .6f]  residual %.3e\n", dict[static_cast<std::size_t>(i)].id.c_str(),
                km.A(i, 0), km.A(i, 1), km.A(i, 2), residuals(i));

  const auto report = analyze_representation(km, residuals, dict, lifted, {}, data.feature_names);
  std::printf("\n%s", report.narrative.c_str());

  const EigenSystem es = eigendecompose(km);
  std::printf("\neigenvalues:");
  for (Eigen::Index j = 0; j < es.eigenvalues.size(); ++j)
    std::printf(" %s", detail::format_complex(es.eigenvalues(j)).c_str());
  std::printf("\n");
}
