#pragma once

// Observable dictionaries and the lifted data matrices built from them.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include "koopman/error.hpp"
#include "koopman/linalg.hpp"
#include "koopman/parallel.hpp"

namespace koopman {

struct Snapshot {
  std::vector<double> values;
  std::size_t time_index = 0;
};

struct Trajectory {
  std::string id;
  std::vector<Snapshot> snapshots;

  std::size_t size() const noexcept { return snapshots.size(); }
};

struct TrajectorySet {
  std::vector<std::string> feature_names;
  std::vector<Trajectory> trajectories;

  std::size_t feature_count() const noexcept { return feature_names.size(); }

  /// Throws InvalidArgument on ragged widths, non-finite readings, irregular
  /// time stamps or trajectories shorter than two snapshots.
  void validate() const {
    detail::require(!trajectories.empty(), ErrorKind::InvalidArgument,
                    "trajectory set is empty");
    detail::require(!feature_names.empty(), ErrorKind::InvalidArgument, "no features");
    for (const auto& traj : trajectories) {
      detail::require(traj.size() >= 2, ErrorKind::InvalidArgument,
                      "trajectory '" + traj.id + "' has fewer than 2 snapshots");
      for (std::size_t k = 0; k < traj.size(); ++k) {
        const auto& snap = traj.snapshots[k];
        detail::require(snap.values.size() == feature_count(), ErrorKind::InvalidArgument,
                        "trajectory '" + traj.id + "' has a snapshot of the wrong width");
        for (double v : snap.values)
          detail::require(std::isfinite(v), ErrorKind::InvalidArgument,
                          "trajectory '" + traj.id + "' contains a non-finite reading");
        if (k > 0)
          detail::require(snap.time_index == traj.snapshots[k - 1].time_index + 1,
                          ErrorKind::InvalidArgument,
                          "trajectory '" + traj.id + "' is not regularly sampled");
      }
    }
  }
};

/// Builds a single-trajectory set from rows of feature values, t = 0, 1, ...
inline Trajectory make_trajectory(std::string id, const std::vector<std::vector<double>>& rows) {
  Trajectory traj{std::move(id), {}};
  traj.snapshots.reserve(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) traj.snapshots.push_back({rows[k], k});
  return traj;
}

enum class UnaryFunction { Exp, Log, Sqrt, Tanh, Square, Abs, Negate, Reciprocal };

inline std::optional<UnaryFunction> parse_unary(std::string_view name) {
  static const std::pair<std::string_view, UnaryFunction> table[] = {
      {"exp", UnaryFunction::Exp},       {"log", UnaryFunction::Log},
      {"sqrt", UnaryFunction::Sqrt},     {"tanh", UnaryFunction::Tanh},
      {"square", UnaryFunction::Square}, {"abs", UnaryFunction::Abs},
      {"neg", UnaryFunction::Negate},    {"reciprocal", UnaryFunction::Reciprocal},
  };
  for (const auto& [key, fn] : table)
    if (key == name) return fn;
  return std::nullopt;
}

inline double apply(UnaryFunction fn, double x) {
  switch (fn) {
    case UnaryFunction::Exp: return std::exp(x);
    case UnaryFunction::Log: return std::log(x);
    case UnaryFunction::Sqrt: return std::sqrt(x);
    case UnaryFunction::Tanh: return std::tanh(x);
    case UnaryFunction::Square: return x * x;
    case UnaryFunction::Abs: return std::abs(x);
    case UnaryFunction::Negate: return -x;
    case UnaryFunction::Reciprocal: return 1.0 / x;
  }
  return x;
}

namespace kind {

struct Coordinate {
  std::size_t feature;
};
struct Sine {
  std::size_t arg;
};
struct Cosine {
  std::size_t arg;
};
/// Product of features raised to the given exponents; all zeros is the constant 1.
struct Monomial {
  std::vector<unsigned> exponents;
};
struct Delay {
  std::size_t base;
  std::size_t lag;
};
struct Unary {
  UnaryFunction fn;
  std::size_t arg;
};
struct Linear {
  std::vector<std::pair<std::size_t, double>> terms;
  double offset = 0.0;
};

}  // namespace kind

using ObservableKind = std::variant<kind::Coordinate, kind::Sine, kind::Cosine, kind::Monomial,
                                    kind::Delay, kind::Unary, kind::Linear>;

/// What an observable is a function of: raw features and earlier observables.
struct Dependence {
  std::set<std::size_t> features;
  std::set<std::size_t> observables;

  bool empty() const noexcept { return features.empty() && observables.empty(); }
  bool operator==(const Dependence&) const = default;
};

struct Observable {
  std::string id;
  ObservableKind kind;
  Dependence depends_on;
};

using IndexSet = std::set<std::size_t>;

class Dictionary {
 public:
  explicit Dictionary(std::size_t feature_count) : feature_count_(feature_count) {
    detail::require(feature_count > 0, ErrorKind::InvalidArgument, "dictionary needs features");
  }

  /// Appends an observable. Kinds may reference earlier observables only, which
  /// keeps the dependence graph acyclic. A declared dependence set must
  /// contain every reference the kind makes; extra declared edges record
  /// known functional relations.
  std::size_t add(std::string id, ObservableKind kind,
                  std::optional<Dependence> declared = std::nullopt) {
    detail::require(!id.empty(), ErrorKind::InvalidArgument, "observable id is empty");
    detail::require(!index_.contains(id), ErrorKind::InvalidArgument,
                    "duplicate observable id '" + id + "'");
    Dependence structural = structural_dependence(id, kind);
    Dependence deps = structural;
    if (declared) {
      for (std::size_t f : declared->features)
        detail::require(f < feature_count_, ErrorKind::InvalidArgument,
                        "observable '" + id + "' depends on an unknown feature");
      for (std::size_t o : declared->observables)
        detail::require(o < observables_.size(), ErrorKind::InvalidArgument,
                        "observable '" + id + "' depends on a later or unknown observable");
      for (std::size_t o : structural.observables)
        detail::require(declared->observables.contains(o), ErrorKind::InvalidArgument,
                        "observable '" + id + "' must declare its dependence on '" +
                            observables_[o].id + "'");
      deps = *declared;
    }
    std::size_t depth = history_depth_of(kind);
    observables_.push_back({id, std::move(kind), std::move(deps)});
    depth_.push_back(depth);
    index_.emplace(std::move(id), observables_.size() - 1);
    return observables_.size() - 1;
  }

  std::size_t size() const noexcept { return observables_.size(); }
  std::size_t feature_count() const noexcept { return feature_count_; }
  const std::vector<Observable>& observables() const noexcept { return observables_; }
  const Observable& operator[](std::size_t i) const { return observables_.at(i); }

  std::size_t index_of(const std::string& id) const {
    auto it = index_.find(id);
    detail::require(it != index_.end(), ErrorKind::UnknownId, "no observable '" + id + "'");
    return it->second;
  }

  /// How many past snapshots observable i reads, counting nested delays.
  std::size_t history_depth(std::size_t i) const { return depth_.at(i); }

  std::size_t max_lag() const {
    std::size_t lag = 0;
    for (std::size_t d : depth_) lag = std::max(lag, d);
    return lag;
  }

  /// Edges (from, to) of the dependence graph: `to` depends on `from`.
  std::vector<std::pair<std::size_t, std::size_t>> dependence_edges() const {
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (std::size_t i = 0; i < observables_.size(); ++i)
      for (std::size_t j : observables_[i].depends_on.observables) edges.emplace_back(j, i);
    return edges;
  }

 private:
  Dependence structural_dependence(const std::string& id, const ObservableKind& kind) const {
    Dependence deps;
    auto ref = [&](std::size_t o) {
      detail::require(o < observables_.size(), ErrorKind::InvalidArgument,
                      "observable '" + id + "' references a later or unknown observable");
      deps.observables.insert(o);
    };
    std::visit(
        [&](const auto& k) {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, kind::Coordinate>) {
            detail::require(k.feature < feature_count_, ErrorKind::InvalidArgument,
                            "observable '" + id + "' reads an unknown feature");
            deps.features.insert(k.feature);
          } else if constexpr (std::is_same_v<K, kind::Monomial>) {
            detail::require(k.exponents.size() == feature_count_, ErrorKind::InvalidArgument,
                            "monomial '" + id + "' needs one exponent per feature");
            for (std::size_t f = 0; f < k.exponents.size(); ++f)
              if (k.exponents[f] != 0) deps.features.insert(f);
          } else if constexpr (std::is_same_v<K, kind::Delay>) {
            detail::require(k.lag >= 1, ErrorKind::InvalidArgument,
                            "delay '" + id + "' needs a positive lag");
            ref(k.base);
          } else if constexpr (std::is_same_v<K, kind::Linear>) {
            detail::require(!k.terms.empty(), ErrorKind::InvalidArgument,
                            "linear combination '" + id + "' has no terms");
            for (const auto& term : k.terms) ref(term.first);
          } else {
            ref(k.arg);
          }
        },
        kind);
    return deps;
  }

  std::size_t history_depth_of(const ObservableKind& kind) const {
    return std::visit(
        [&](const auto& k) -> std::size_t {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, kind::Coordinate> || std::is_same_v<K, kind::Monomial>) {
            return 0;
          } else if constexpr (std::is_same_v<K, kind::Delay>) {
            return k.lag + depth_[k.base];
          } else if constexpr (std::is_same_v<K, kind::Linear>) {
            std::size_t d = 0;
            for (const auto& term : k.terms) d = std::max(d, depth_[term.first]);
            return d;
          } else {
            return depth_[k.arg];
          }
        },
        kind);
  }

  std::size_t feature_count_;
  std::vector<Observable> observables_;
  std::vector<std::size_t> depth_;
  std::unordered_map<std::string, std::size_t> index_;
};

namespace detail {

inline double evaluate_at(const Dictionary& dict, std::span<const Snapshot> window,
                          std::size_t obs, std::size_t back) {
  const Observable& o = dict[obs];
  const Snapshot& now = window[window.size() - 1 - back];
  double value = std::visit(
      [&](const auto& k) -> double {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, kind::Coordinate>) {
          return now.values[k.feature];
        } else if constexpr (std::is_same_v<K, kind::Sine>) {
          return std::sin(evaluate_at(dict, window, k.arg, back));
        } else if constexpr (std::is_same_v<K, kind::Cosine>) {
          return std::cos(evaluate_at(dict, window, k.arg, back));
        } else if constexpr (std::is_same_v<K, kind::Monomial>) {
          double p = 1.0;
          for (std::size_t f = 0; f < k.exponents.size(); ++f)
            for (unsigned e = 0; e < k.exponents[f]; ++e) p *= now.values[f];
          return p;
        } else if constexpr (std::is_same_v<K, kind::Delay>) {
          return evaluate_at(dict, window, k.base, back + k.lag);
        } else if constexpr (std::is_same_v<K, kind::Unary>) {
          return apply(k.fn, evaluate_at(dict, window, k.arg, back));
        } else {
          double s = k.offset;
          for (const auto& [idx, coef] : k.terms) s += coef * evaluate_at(dict, window, idx, back);
          return s;
        }
      },
      o.kind);
  if (!std::isfinite(value))
    throw Error(ErrorKind::Evaluation, "observable '" + o.id + "' produced a non-finite value");
  return value;
}

}  // namespace detail

/// Evaluates the dictionary at the last snapshot of `window`; delays read
/// backwards into the window.
inline Vector evaluate_snapshot(const Dictionary& dict, std::span<const Snapshot> window) {
  detail::require(window.size() >= dict.max_lag() + 1, ErrorKind::InsufficientHistory,
                  "window of " + std::to_string(window.size()) + " snapshots, need " +
                      std::to_string(dict.max_lag() + 1));
  for (std::size_t k = 0; k < window.size(); ++k) {
    detail::require(window[k].values.size() == dict.feature_count(), ErrorKind::ShapeMismatch,
                    "snapshot width does not match the dictionary");
    if (k > 0)
      detail::require(window[k].time_index == window[k - 1].time_index + 1,
                      ErrorKind::InvalidArgument, "window snapshots are not contiguous");
  }
  Vector out(static_cast<Eigen::Index>(dict.size()));
  for (std::size_t i = 0; i < dict.size(); ++i)
    out(static_cast<Eigen::Index>(i)) = detail::evaluate_at(dict, window, i, 0);
  return out;
}

struct ColumnOrigin {
  std::size_t trajectory;  // position in the input set
  std::string trajectory_id;
  std::size_t time_index;  // time of the snapshot lifted into G
};

struct LiftedPair {
  Matrix G;
  Matrix G_plus;
  std::vector<ColumnOrigin> column_origin;
  std::vector<std::size_t> x0_columns;

  Eigen::Index columns() const noexcept { return G.cols(); }
};

/// Pairs every lifted snapshot with the lift one step later, trajectory by
/// trajectory. Delays consume history at the start of each trajectory.
inline LiftedPair lift_trajectories(const Dictionary& dict, const TrajectorySet& data) {
  data.validate();
  detail::require(data.feature_count() == dict.feature_count(), ErrorKind::ShapeMismatch,
                  "dictionary expects " + std::to_string(dict.feature_count()) +
                      " features, data has " + std::to_string(data.feature_count()));
  const std::size_t lag = dict.max_lag();
  std::string too_short;
  for (const auto& traj : data.trajectories)
    if (traj.size() < lag + 2) too_short += (too_short.empty() ? "" : ", ") + traj.id;
  detail::require(too_short.empty(), ErrorKind::EmptyTrajectory,
                  "no column pairs from trajectories: " + too_short);

  std::vector<Matrix> lifts(data.trajectories.size());
  parallel_for(data.trajectories.size(), [&](std::size_t t) {
    const auto& snaps = data.trajectories[t].snapshots;
    const std::size_t count = snaps.size() - lag;
    Matrix lifted(static_cast<Eigen::Index>(dict.size()), static_cast<Eigen::Index>(count));
    std::span<const Snapshot> all(snaps);
    for (std::size_t c = 0; c < count; ++c)
      lifted.col(static_cast<Eigen::Index>(c)) = evaluate_snapshot(dict, all.subspan(c, lag + 1));
    lifts[t] = std::move(lifted);
  });

  Eigen::Index total = 0;
  for (const auto& l : lifts) total += l.cols() - 1;
  LiftedPair out;
  out.G.resize(static_cast<Eigen::Index>(dict.size()), total);
  out.G_plus.resize(static_cast<Eigen::Index>(dict.size()), total);
  Eigen::Index col = 0;
  for (std::size_t t = 0; t < lifts.size(); ++t) {
    const Eigen::Index pairs = lifts[t].cols() - 1;
    out.G.middleCols(col, pairs) = lifts[t].leftCols(pairs);
    out.G_plus.middleCols(col, pairs) = lifts[t].rightCols(pairs);
    out.x0_columns.push_back(static_cast<std::size_t>(col));
    const auto& traj = data.trajectories[t];
    for (Eigen::Index c = 0; c < pairs; ++c)
      out.column_origin.push_back(
          {t, traj.id, traj.snapshots[lag + static_cast<std::size_t>(c)].time_index});
    col += pairs;
  }
  return out;
}

/// Raw feature readings at the G columns of `lifted` (rows follow `features`).
inline Matrix feature_columns(const TrajectorySet& data, const LiftedPair& lifted,
                              const std::vector<std::size_t>& features) {
  Matrix out(static_cast<Eigen::Index>(features.size()), lifted.columns());
  for (Eigen::Index c = 0; c < lifted.columns(); ++c) {
    const auto& origin = lifted.column_origin[static_cast<std::size_t>(c)];
    const auto& traj = data.trajectories.at(origin.trajectory);
    const auto& snap = traj.snapshots[origin.time_index - traj.snapshots.front().time_index];
    for (std::size_t r = 0; r < features.size(); ++r)
      out(static_cast<Eigen::Index>(r), c) = snap.values.at(features[r]);
  }
  return out;
}

/// Hankel-style delay matrix: column j holds f(j+depth-1), ..., f(j).
inline Matrix delay_embed(const Trajectory& series, std::size_t feature, std::size_t depth) {
  detail::require(depth >= 1, ErrorKind::InvalidArgument, "delay depth must be positive");
  detail::require(depth <= series.size(), ErrorKind::InvalidArgument,
                  "delay depth " + std::to_string(depth) + " exceeds series length " +
                      std::to_string(series.size()));
  const std::size_t cols = series.size() - depth + 1;
  Matrix out(static_cast<Eigen::Index>(depth), static_cast<Eigen::Index>(cols));
  for (std::size_t j = 0; j < cols; ++j)
    for (std::size_t r = 0; r < depth; ++r) {
      const auto& snap = series.snapshots[j + depth - 1 - r];
      detail::require(feature < snap.values.size(), ErrorKind::InvalidArgument,
                      "feature index out of range");
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = snap.values[feature];
    }
  return out;
}

/// Features reached from `observables` through the dependence graph.
inline IndexSet feature_support(const Dictionary& dict, const IndexSet& observables) {
  IndexSet features;
  std::vector<std::size_t> stack(observables.begin(), observables.end());
  IndexSet seen;
  while (!stack.empty()) {
    std::size_t o = stack.back();
    stack.pop_back();
    if (!seen.insert(o).second) continue;
    const auto& deps = dict[o].depends_on;
    features.insert(deps.features.begin(), deps.features.end());
    stack.insert(stack.end(), deps.observables.begin(), deps.observables.end());
  }
  return features;
}

/// Smallest superset of `seed` containing every observable whose declared
/// dependencies all lie inside the observables and features generated so far.
/// Observables with no dependencies are never pulled in implicitly.
inline IndexSet dependence_closure(const Dictionary& dict, const IndexSet& seed) {
  for (std::size_t s : seed)
    detail::require(s < dict.size(), ErrorKind::UnknownId,
                    "observable index " + std::to_string(s) + " out of range");
  IndexSet closure = seed;
  IndexSet features = feature_support(dict, seed);
  bool grew = true;
  while (grew) {
    grew = false;
    for (std::size_t i = 0; i < dict.size(); ++i) {
      if (closure.contains(i)) continue;
      const auto& deps = dict[i].depends_on;
      if (deps.empty()) continue;
      bool inside = std::all_of(deps.observables.begin(), deps.observables.end(),
                                [&](std::size_t o) { return closure.contains(o); }) &&
                    std::all_of(deps.features.begin(), deps.features.end(),
                                [&](std::size_t f) { return features.contains(f); });
      if (inside) {
        closure.insert(i);
        features.insert(deps.features.begin(), deps.features.end());
        grew = true;
      }
    }
  }
  return closure;
}

inline std::set<std::string> dependence_closure(const Dictionary& dict,
                                                const std::set<std::string>& seed) {
  IndexSet idx;
  for (const auto& id : seed) idx.insert(dict.index_of(id));
  std::set<std::string> out;
  for (std::size_t i : dependence_closure(dict, idx)) out.insert(dict[i].id);
  return out;
}

}  // namespace koopman
