#pragma once

// Finite-dimensional linear and nonlinear representations read off the
// fitted operator's zero pattern and the dictionary's dependence graph.

#include <algorithm>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "koopman/dictionary.hpp"
#include "koopman/edmd.hpp"
#include "koopman/error.hpp"
#include "koopman/linalg.hpp"

namespace koopman {

struct ZeroPattern {
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> mask;  // true = structurally nonzero
  double threshold = 0.05;
  double closure_tol = 1e-6;
  IndexSet closed_rows;

  Eigen::Index size() const noexcept { return mask.rows(); }

  IndexSet row_support(std::size_t row) const {
    IndexSet s;
    for (Eigen::Index j = 0; j < mask.cols(); ++j)
      if (mask(static_cast<Eigen::Index>(row), j)) s.insert(static_cast<std::size_t>(j));
    return s;
  }
};

inline ZeroPattern zero_pattern(const Matrix& A, const Vector& residuals, double threshold,
                                double closure_tol) {
  detail::require(threshold > 0.0, ErrorKind::InvalidArgument, "zero threshold must be positive");
  detail::require(closure_tol > 0.0, ErrorKind::InvalidArgument,
                  "closure tolerance must be positive");
  detail::require(A.rows() == A.cols() && residuals.size() == A.rows(), ErrorKind::ShapeMismatch,
                  "zero pattern needs a square matrix and one residual per row");
  ZeroPattern p;
  p.mask = A.array().abs() > threshold;
  p.threshold = threshold;
  p.closure_tol = closure_tol;
  for (Eigen::Index i = 0; i < residuals.size(); ++i)
    if (residuals(i) < closure_tol) p.closed_rows.insert(static_cast<std::size_t>(i));
  return p;
}

struct ClosedSubset {
  IndexSet members;
  IndexSet generators;
};

struct ClosedSubsetResult {
  std::vector<ClosedSubset> subsets;
  bool truncated = false;
};

struct SubsetSearch {
  /// Largest generator set tried, unless `exhaustive`.
  std::size_t max_generators = 3;
  bool exhaustive = false;
};

/// A member set closes when each generator row is linearly closed with its
/// mask support inside the set. Every other member is a declared function of
/// the generators, so its evolution follows from theirs.
inline bool is_closed(const ZeroPattern& pattern, const IndexSet& members,
                      const IndexSet& generators) {
  for (std::size_t g : generators) {
    if (!pattern.closed_rows.contains(g)) return false;
    for (std::size_t j : pattern.row_support(g))
      if (!members.contains(j)) return false;
  }
  return true;
}

/// Closed sets generated by up to `search.max_generators` observables (all
/// sizes when exhaustive), plus the full dictionary. Each distinct member set
/// is reported once with its first generator set in (size, lexicographic) order.
inline ClosedSubsetResult closed_subsets(const ZeroPattern& pattern, const Dictionary& dict,
                                         SubsetSearch search = {}) {
  const std::size_t d = dict.size();
  detail::require(static_cast<std::size_t>(pattern.size()) == d, ErrorKind::ShapeMismatch,
                  "zero pattern does not match the dictionary size");
  ClosedSubsetResult out;
  const std::size_t cap = search.exhaustive ? d : std::min(search.max_generators, d);
  out.truncated = cap < d;

  std::set<IndexSet> seen;
  auto consider = [&](const IndexSet& generators) {
    IndexSet members = dependence_closure(dict, generators);
    if (seen.contains(members)) return;
    if (is_closed(pattern, members, generators)) {
      seen.insert(members);
      out.subsets.push_back({std::move(members), generators});
    }
  };

  std::vector<std::size_t> combo;
  for (std::size_t k = 1; k <= cap; ++k) {
    combo.resize(k);
    for (std::size_t i = 0; i < k; ++i) combo[i] = i;
    while (true) {
      consider(IndexSet(combo.begin(), combo.end()));
      std::size_t i = k;
      while (i > 0 && combo[i - 1] == d - k + i - 1) --i;
      if (i == 0) break;
      ++combo[i - 1];
      for (std::size_t j = i; j < k; ++j) combo[j] = combo[j - 1] + 1;
    }
  }
  if (cap < d) {
    IndexSet all;
    for (std::size_t i = 0; i < d; ++i) all.insert(i);
    consider(all);
  }
  std::stable_sort(out.subsets.begin(), out.subsets.end(), [](const auto& a, const auto& b) {
    if (a.generators.size() != b.generators.size()) return a.generators.size() < b.generators.size();
    if (a.members.size() != b.members.size()) return a.members.size() < b.members.size();
    return a.members < b.members;
  });
  return out;
}

enum class RepresentationKind { Linear, Nonlinear };

inline const char* to_string(RepresentationKind k) {
  return k == RepresentationKind::Linear ? "linear" : "nonlinear";
}

struct Representation {
  std::vector<std::string> observables;  // member ids, dictionary order
  std::vector<std::string> generators;   // generator ids, dictionary order
  std::vector<std::size_t> generator_features;
  std::size_t dimension = 0;
  RepresentationKind kind = RepresentationKind::Nonlinear;
  bool faithful = false;
};

struct RepresentationReport {
  std::vector<Representation> subsets;
  bool truncated = false;
  std::string narrative;
};

struct RepresentationThresholds {
  double zero_threshold = 0.05;
  double closure_tol = 1e-6;
  SubsetSearch search{};
};

/// Normalised residual of rows `members` when the fit is restricted to the
/// columns in `members`.
inline double restricted_residual(const Matrix& A, const LiftedPair& lifted,
                                  const IndexSet& members) {
  double worst = 0.0;
  for (std::size_t i : members) {
    const auto row = static_cast<Eigen::Index>(i);
    Eigen::RowVectorXd pred = Eigen::RowVectorXd::Zero(lifted.G.cols());
    for (std::size_t j : members) pred += A(row, static_cast<Eigen::Index>(j)) * lifted.G.row(static_cast<Eigen::Index>(j));
    const double r = (lifted.G_plus.row(row) - pred).norm() /
                     std::max(1.0, lifted.G_plus.row(row).norm());
    worst = std::max(worst, r);
  }
  return worst;
}

inline RepresentationReport analyze_representation(
    const KoopmanMatrix& km, const Vector& residuals, const Dictionary& dict,
    const LiftedPair& lifted, const RepresentationThresholds& th = {},
    const std::vector<std::string>& feature_names = {}) {
  detail::require(km.A.rows() == static_cast<Eigen::Index>(dict.size()) &&
                      lifted.G.rows() == km.A.rows(),
                  ErrorKind::ShapeMismatch, "operator, data and dictionary sizes disagree");
  const ZeroPattern pattern = zero_pattern(km.A, residuals, th.zero_threshold, th.closure_tol);
  const ClosedSubsetResult found = closed_subsets(pattern, dict, th.search);

  auto feature_label = [&](std::size_t f) {
    return f < feature_names.size() ? feature_names[f] : "f" + std::to_string(f);
  };
  auto ids = [&](const IndexSet& s) {
    std::vector<std::string> v;
    for (std::size_t i : s) v.push_back(dict[i].id);
    return v;
  };
  auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : ", ") + x;
    return s;
  };

  RepresentationReport report;
  report.truncated = found.truncated;
  std::ostringstream text;
  for (const auto& sub : found.subsets) {
    Representation rep;
    rep.observables = ids(sub.members);
    rep.generators = ids(sub.generators);
    const IndexSet feats = feature_support(dict, sub.generators);
    rep.generator_features.assign(feats.begin(), feats.end());
    rep.dimension = sub.generators.size();
    rep.faithful = feats.size() == dict.feature_count();
    const bool rows_closed =
        std::all_of(sub.members.begin(), sub.members.end(),
                    [&](std::size_t i) { return pattern.closed_rows.contains(i); });
    rep.kind = rows_closed && restricted_residual(km.A, lifted, sub.members) < th.closure_tol
                   ? RepresentationKind::Linear
                   : RepresentationKind::Nonlinear;

    std::vector<std::string> feat_names;
    for (std::size_t f : rep.generator_features) feat_names.push_back(feature_label(f));
    text << rep.dimension << "-dimensional " << (rep.faithful ? "faithful " : "")
         << to_string(rep.kind) << " representation generated by {" << join(rep.generators)
         << "} (features: " << join(feat_names) << "); closed observables {"
         << join(rep.observables) << "}\n";
    report.subsets.push_back(std::move(rep));
  }
  if (report.subsets.empty()) text << "no closed observable subsets found\n";
  if (report.truncated)
    text << "search limited to " << th.search.max_generators
         << " generators plus the full dictionary\n";
  report.narrative = text.str();
  return report;
}

inline nlohmann::json to_json(const RepresentationReport& report,
                              const std::vector<std::string>& feature_names = {}) {
  using nlohmann::json;
  json subsets = json::array();
  for (const auto& rep : report.subsets) {
    json feats = json::array();
    for (std::size_t f : rep.generator_features)
      feats.push_back(f < feature_names.size() ? json(feature_names[f]) : json(f));
    subsets.push_back({{"observables", rep.observables},
                       {"generators", rep.generators},
                       {"generator_features", std::move(feats)},
                       {"dimension", rep.dimension},
                       {"kind", to_string(rep.kind)},
                       {"faithful", rep.faithful}});
  }
  return {{"subsets", std::move(subsets)},
          {"truncated", report.truncated},
          {"narrative", report.narrative}};
}

}  // namespace koopman
