#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "koopman/dictionary.hpp"
#include "support/oracles.hpp"

using namespace koopman;
using koopman::testing::worked_example_dictionary;

namespace {

std::vector<Snapshot> window(std::initializer_list<std::vector<double>> rows) {
  std::vector<Snapshot> w;
  std::size_t t = 0;
  for (const auto& r : rows) w.push_back({r, t++});
  return w;
}

TrajectorySet single(std::vector<std::vector<double>> rows, std::vector<std::string> names = {"x"}) {
  TrajectorySet set;
  set.feature_names = std::move(names);
  set.trajectories.push_back(make_trajectory("a", rows));
  return set;
}

}  // namespace

TEST(EvaluateSnapshot, WorkedExampleAtOrigin) {
  const auto dict = worked_example_dictionary();
  const auto w = window({{0.0, 5.0}});
  Vector g = evaluate_snapshot(dict, w);
  EXPECT_EQ(g(0), 0.0);
  EXPECT_EQ(g(1), 0.0);
  EXPECT_EQ(g(2), 5.0);
}

TEST(EvaluateSnapshot, WorkedExampleAtHalfPi) {
  const auto dict = worked_example_dictionary();
  const auto w = window({{std::numbers::pi / 2, 1.0}});
  Vector g = evaluate_snapshot(dict, w);
  EXPECT_DOUBLE_EQ(g(0), std::numbers::pi / 2);
  EXPECT_DOUBLE_EQ(g(1), 1.0);
  EXPECT_EQ(g(2), 1.0);
}

TEST(EvaluateSnapshot, DelayReadsPreviousSnapshot) {
  Dictionary dict(1);
  auto x = dict.add("x", kind::Coordinate{0});
  dict.add("x_1", kind::Delay{x, 1});
  const auto w = window({{1.0}, {2.0}});
  Vector g = evaluate_snapshot(dict, w);
  EXPECT_EQ(g(0), 2.0);
  EXPECT_EQ(g(1), 1.0);
}

TEST(EvaluateSnapshot, NestedDelaysAccumulateLag) {
  Dictionary dict(1);
  auto x = dict.add("x", kind::Coordinate{0});
  auto d1 = dict.add("d1", kind::Delay{x, 1});
  dict.add("d3", kind::Delay{d1, 2});
  EXPECT_EQ(dict.max_lag(), 3u);
  const auto w = window({{1.0}, {2.0}, {3.0}, {4.0}});
  Vector g = evaluate_snapshot(dict, w);
  EXPECT_EQ(g(2), 1.0);
}

TEST(EvaluateSnapshot, ShortWindowIsInsufficientHistory) {
  Dictionary dict(1);
  auto x = dict.add("x", kind::Coordinate{0});
  dict.add("x_2", kind::Delay{x, 2});
  const auto w = window({{1.0}, {2.0}});
  try {
    evaluate_snapshot(dict, w);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InsufficientHistory);
  }
}

TEST(EvaluateSnapshot, NonFiniteValueNamesTheObservable) {
  Dictionary dict(1);
  auto x = dict.add("x", kind::Coordinate{0});
  dict.add("logx", kind::Unary{UnaryFunction::Log, x});
  const auto w = window({{-1.0}});
  try {
    evaluate_snapshot(dict, w);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Evaluation);
    EXPECT_NE(std::string(e.what()).find("logx"), std::string::npos);
  }
}

TEST(EvaluateSnapshot, MonomialAndLinearCombination) {
  Dictionary dict(2);
  auto x = dict.add("x", kind::Coordinate{0});
  auto y = dict.add("y", kind::Coordinate{1});
  dict.add("x2y", kind::Monomial{{2, 1}});
  dict.add("one", kind::Monomial{{0, 0}});
  dict.add("lin", kind::Linear{{{x, 2.0}, {y, -1.0}}, 0.5});
  dict.add("cosx", kind::Cosine{x});
  const auto w = window({{3.0, 2.0}});
  Vector g = evaluate_snapshot(dict, w);
  EXPECT_EQ(g(2), 18.0);
  EXPECT_EQ(g(3), 1.0);
  EXPECT_EQ(g(4), 4.5);
  EXPECT_DOUBLE_EQ(g(5), std::cos(3.0));
}

TEST(Dictionary, RejectsDuplicateAndForwardReferences) {
  Dictionary dict(1);
  auto x = dict.add("x", kind::Coordinate{0});
  EXPECT_THROW(dict.add("x", kind::Coordinate{0}), Error);
  EXPECT_THROW(dict.add("s", kind::Sine{x + 1}), Error);
  EXPECT_THROW(dict.add("f", kind::Coordinate{1}), Error);
}

TEST(Dictionary, DeclaredDependenceMustCoverStructuralReferences) {
  Dictionary dict(2);
  auto x = dict.add("x", kind::Coordinate{0});
  dict.add("y", kind::Coordinate{1});
  Dependence wrong;
  wrong.features = {0};
  EXPECT_THROW(dict.add("s", kind::Sine{x}, wrong), Error);
  Dependence extra;
  extra.observables = {x, 1};
  EXPECT_NO_THROW(dict.add("s", kind::Sine{x}, extra));
}

TEST(LiftTrajectories, IdentityShiftPairing) {
  Dictionary dict(1);
  dict.add("x", kind::Coordinate{0});
  const auto lifted = lift_trajectories(dict, single({{1}, {2}, {3}}));
  ASSERT_EQ(lifted.G.cols(), 2);
  EXPECT_EQ(lifted.G(0, 0), 1.0);
  EXPECT_EQ(lifted.G(0, 1), 2.0);
  EXPECT_EQ(lifted.G_plus(0, 0), 2.0);
  EXPECT_EQ(lifted.G_plus(0, 1), 3.0);
  EXPECT_EQ(lifted.x0_columns, std::vector<std::size_t>{0});
}

TEST(LiftTrajectories, TwoTrajectoriesNeverCrossPaired) {
  Dictionary dict(1);
  dict.add("x", kind::Coordinate{0});
  TrajectorySet set;
  set.feature_names = {"x"};
  set.trajectories.push_back(make_trajectory("a", {{1}, {2}, {3}, {4}}));
  set.trajectories.push_back(make_trajectory("b", {{10}, {20}, {30}}));
  const auto lifted = lift_trajectories(dict, set);
  ASSERT_EQ(lifted.G.cols(), 5);
  EXPECT_EQ(lifted.x0_columns, (std::vector<std::size_t>{0, 3}));
  EXPECT_EQ(lifted.G(0, 2), 3.0);
  EXPECT_EQ(lifted.G_plus(0, 2), 4.0);
  EXPECT_EQ(lifted.G(0, 3), 10.0);
  EXPECT_EQ(lifted.column_origin[3].trajectory_id, "b");
  EXPECT_EQ(lifted.column_origin[4].time_index, 1u);
}

TEST(LiftTrajectories, WorkedExamplePairs) {
  const auto dict = worked_example_dictionary();
  const auto data = koopman::testing::worked_example_data(7, 2, 5);
  const auto lifted = lift_trajectories(dict, data);
  for (Eigen::Index c = 0; c < lifted.G.cols(); ++c) {
    const double x = lifted.G(0, c), y = lifted.G(2, c);
    EXPECT_DOUBLE_EQ(lifted.G(1, c), std::sin(x));
    EXPECT_DOUBLE_EQ(lifted.G_plus(0, c), x + std::sin(x));
    EXPECT_DOUBLE_EQ(lifted.G_plus(1, c), std::sin(x + std::sin(x)));
    EXPECT_DOUBLE_EQ(lifted.G_plus(2, c), y + x);
  }
}

TEST(LiftTrajectories, DelaysConsumeHistory) {
  Dictionary dict(1);
  auto x = dict.add("x", kind::Coordinate{0});
  dict.add("x_2", kind::Delay{x, 2});
  const auto lifted = lift_trajectories(dict, single({{1}, {2}, {3}, {4}, {5}}));
  ASSERT_EQ(lifted.G.cols(), 2);  // 5 - 1 - 2
  EXPECT_EQ(lifted.G(0, 0), 3.0);
  EXPECT_EQ(lifted.G(1, 0), 1.0);
  EXPECT_EQ(lifted.G_plus(1, 1), 3.0);
}

TEST(LiftTrajectories, TooShortTrajectoryIsNamed) {
  Dictionary dict(1);
  auto x = dict.add("x", kind::Coordinate{0});
  dict.add("x_2", kind::Delay{x, 2});
  TrajectorySet set;
  set.feature_names = {"x"};
  set.trajectories.push_back(make_trajectory("long", {{1}, {2}, {3}, {4}}));
  set.trajectories.push_back(make_trajectory("stubby", {{1}, {2}, {3}}));
  try {
    lift_trajectories(dict, set);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyTrajectory);
    EXPECT_NE(std::string(e.what()).find("stubby"), std::string::npos);
    EXPECT_EQ(std::string(e.what()).find("long"), std::string::npos);
  }
}

TEST(LiftTrajectories, RejectsNonFiniteData) {
  Dictionary dict(1);
  dict.add("x", kind::Coordinate{0});
  EXPECT_THROW(lift_trajectories(dict, single({{1}, {NAN}, {3}})), Error);
}

TEST(DelayEmbed, NewestFirstColumns) {
  const auto traj = make_trajectory("s", {{1}, {2}, {3}, {4}});
  Matrix m = delay_embed(traj, 0, 2);
  Matrix expected(2, 3);
  expected << 2, 3, 4, 1, 2, 3;
  EXPECT_EQ(m, expected);
}

TEST(DelayEmbed, DepthOneIsTheSeries) {
  const auto traj = make_trajectory("s", {{1}, {2}, {3}, {4}});
  Matrix m = delay_embed(traj, 0, 1);
  ASSERT_EQ(m.rows(), 1);
  EXPECT_EQ(m, (Matrix(1, 4) << 1, 2, 3, 4).finished());
}

TEST(DelayEmbed, FullDepthSingleColumn) {
  const auto traj = make_trajectory("s", {{1}, {2}, {3}, {4}});
  Matrix m = delay_embed(traj, 0, 4);
  EXPECT_EQ(m, (Matrix(4, 1) << 4, 3, 2, 1).finished());
  EXPECT_THROW(delay_embed(traj, 0, 5), Error);
}

TEST(DelayEmbed, MatchesDelayDictionary) {
  const auto traj = make_trajectory("s", {{1}, {4}, {9}, {16}, {25}});
  Dictionary dict(1);
  auto x = dict.add("x", kind::Coordinate{0});
  dict.add("x1", kind::Delay{x, 1});
  dict.add("x2", kind::Delay{x, 2});
  Matrix hankel = delay_embed(traj, 0, 3);
  for (Eigen::Index j = 0; j < hankel.cols(); ++j) {
    std::span<const Snapshot> w(traj.snapshots.data() + j, 3);
    EXPECT_EQ(evaluate_snapshot(dict, w), Vector(hankel.col(j)));
  }
}

TEST(DependenceClosure, WorkedExample) {
  const auto dict = worked_example_dictionary();
  EXPECT_EQ(dependence_closure(dict, std::set<std::string>{"g1"}),
            (std::set<std::string>{"g1", "g2"}));
  EXPECT_EQ(dependence_closure(dict, std::set<std::string>{"g3"}), (std::set<std::string>{"g3"}));
  EXPECT_EQ(dependence_closure(dict, std::set<std::string>{"g1", "g2", "g3"}),
            (std::set<std::string>{"g1", "g2", "g3"}));
  EXPECT_THROW(dependence_closure(dict, std::set<std::string>{"nope"}), Error);
}

TEST(DependenceClosure, FeatureSupportPullsInFunctionsOfTheSameFeature) {
  Dictionary dict(2);
  dict.add("x", kind::Coordinate{0});
  dict.add("y", kind::Coordinate{1});
  dict.add("x2", kind::Monomial{{2, 0}});
  dict.add("xy", kind::Monomial{{1, 1}});
  dict.add("one", kind::Monomial{{0, 0}});
  EXPECT_EQ(dependence_closure(dict, IndexSet{0}), (IndexSet{0, 2}));
  EXPECT_EQ(dependence_closure(dict, IndexSet{0, 1}), (IndexSet{0, 1, 2, 3}));
}
