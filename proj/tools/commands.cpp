#include "commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <openssl/evp.h>

#include "koopman/koopman.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace koop {
namespace {

using koopman::Error;
using koopman::ErrorKind;

[[noreturn]] void input_error(const std::string& msg) {
  throw Error(ErrorKind::InvalidArgument, msg);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    auto b = cell.find_first_not_of(" \t\r");
    auto e = cell.find_last_not_of(" \t\r");
    cells.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_number(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) input_error("malformed number '" + s + "' at " + where);
    return v;
  } catch (const std::logic_error&) {
    input_error("malformed number '" + s + "' at " + where);
  }
}

struct Config {
  json doc = json::object();
  fs::path base;

  fs::path path_of(const std::string& key) const {
    if (!doc.contains(key) || !doc[key].is_string()) input_error("config needs a '" + key + "' path");
    fs::path p = doc[key].get<std::string>();
    return p.is_absolute() ? p : base / p;
  }
  template <class T>
  T get_or(const json& section, const std::string& key, T fallback) const {
    if (!section.is_object() || !section.contains(key) || section[key].is_null()) return fallback;
    return section[key].get<T>();
  }
  template <class T>
  T get_or(const std::string& key, T fallback) const {
    return get_or(doc, key, fallback);
  }
  const json& section(const std::string& key) const {
    static const json empty = json::object();
    return doc.contains(key) ? doc[key] : empty;
  }
};

/// A command's own output path: --out, else `out` inside its config section.
std::optional<fs::path> output_path(const Config& cfg, const json& section, const RunOptions& opts) {
  if (opts.out) return opts.out;
  if (!section.is_object() || !section.contains("out")) return std::nullopt;
  fs::path p = section["out"].get<std::string>();
  return p.is_absolute() ? p : cfg.base / p;
}

Config load_config(const RunOptions& opts) {
  Config cfg;
  if (!opts.config) return cfg;
  std::ifstream in(*opts.config);
  if (!in) input_error("cannot open config " + opts.config->string());
  try {
    cfg.doc = json::parse(in);
  } catch (const json::parse_error& e) {
    input_error("config " + opts.config->string() + " is not valid JSON: " + e.what());
  }
  if (!cfg.doc.is_object()) input_error("config must be a JSON object");
  cfg.base = opts.config->parent_path();
  return cfg;
}

double positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) input_error(std::string(name) + " must be positive");
  return v;
}

struct Tolerances {
  double svd_tol;
  double zero_threshold;
  double closure_tol;
};

Tolerances tolerances(const Config& cfg, const RunOptions& opts) {
  return {positive(opts.tol.value_or(cfg.get_or("tol", koopman::kDefaultSvdTolerance)), "tol"),
          positive(opts.threshold.value_or(cfg.get_or("threshold", 0.05)), "threshold"),
          positive(cfg.get_or("closure_tol", 1e-6), "closure_tol")};
}

json dictionary_document(const Config& cfg) {
  if (!cfg.doc.contains("dictionary")) input_error("config needs a 'dictionary'");
  const json& d = cfg.doc["dictionary"];
  if (d.is_string()) {
    std::ifstream in(cfg.path_of("dictionary"));
    if (!in) input_error("cannot open dictionary file " + cfg.path_of("dictionary").string());
    try {
      return json::parse(in);
    } catch (const json::parse_error& e) {
      input_error(std::string("dictionary file is not valid JSON: ") + e.what());
    }
  }
  return d;
}

/// Everything the fit and reduce workflows share.
struct FitRun {
  koopman::TrajectorySet data;
  DictionarySpec dict;
  koopman::LiftedPair lifted;
  koopman::KoopmanMatrix km;
  koopman::Vector residuals;
};

FitRun run_fit(const Config& cfg, const Tolerances& tol) {
  FitRun run{read_trajectory_csv(cfg.path_of("data")), {koopman::Dictionary(1), {}}, {}, {}, {}};
  run.dict = parse_dictionary(dictionary_document(cfg), run.data.feature_names);
  run.lifted = koopman::lift_trajectories(run.dict.dictionary, run.data);
  run.km = koopman::fit_koopman_matrix(run.lifted, tol.svd_tol);
  run.residuals = koopman::residual_report(run.lifted, run.km);
  return run;
}

std::vector<std::size_t> output_features(const Config& cfg, const koopman::TrajectorySet& data) {
  std::vector<std::size_t> idx;
  if (!cfg.doc.contains("outputs")) {
    for (std::size_t i = 0; i < data.feature_count(); ++i) idx.push_back(i);
    return idx;
  }
  for (const auto& name : cfg.doc["outputs"].get<std::vector<std::string>>()) {
    auto it = std::find(data.feature_names.begin(), data.feature_names.end(), name);
    if (it == data.feature_names.end()) input_error("unknown output feature '" + name + "'");
    idx.push_back(static_cast<std::size_t>(it - data.feature_names.begin()));
  }
  if (idx.empty()) input_error("outputs list is empty");
  return idx;
}

json complex_json(const koopman::Complex& z) { return json::array({z.real(), z.imag()}); }

json matrix_json(const koopman::Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

void check_model_hash(const Config& cfg, const koopman::SpectralTriple& triple) {
  if (!cfg.doc.contains("dictionary")) return;
  if (hash_document(dictionary_document(cfg)) != triple.dictionary_hash)
    input_error("model was fitted with a different dictionary (hash " +
                koopman::hash_to_hex(triple.dictionary_hash) + ")");
}

void write_text(const fs::path& path, const std::string& text) {
  koopman::detail::write_atomically(path, text);
}

fs::path with_suffix(const fs::path& p, const std::string& suffix) {
  fs::path out = p;
  out += suffix;
  return out;
}

template <class Body>
int guarded(const char* stage, std::ostream& err, Body&& body) {
  try {
    return body();
  } catch (const Error& e) {
    err << "koop " << stage << ": " << e.what() << "\n";
    return koopman::is_numerical(e.kind()) ? kExitNumerical : kExitInput;
  } catch (const json::exception& e) {
    err << "koop " << stage << ": malformed configuration: " << e.what() << "\n";
    return kExitInput;
  }
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string dump_json(const json& doc, int indent) {
  std::string out;
  auto pad = [&](int depth) {
    if (indent >= 0) out += "\n" + std::string(static_cast<std::size_t>(indent * depth), ' ');
  };
  auto rec = [&](auto&& self, const json& j, int depth) -> void {
    if (j.is_number_float()) {
      const double v = j.get<double>();
      out += std::isfinite(v) ? format_double(v) : "null";
    } else if (j.is_object()) {
      if (j.empty()) { out += "{}"; return; }
      out += "{";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ",";
        first = false;
        pad(depth + 1);
        out += json(it.key()).dump() + (indent >= 0 ? ": " : ":");
        self(self, it.value(), depth + 1);
      }
      pad(depth);
      out += "}";
    } else if (j.is_array()) {
      if (j.empty()) { out += "[]"; return; }
      const bool flat = std::none_of(j.begin(), j.end(),
                                     [](const json& e) { return e.is_structured(); });
      out += "[";
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out += flat && indent >= 0 ? ", " : ",";
        if (!flat) pad(depth + 1);
        self(self, j[i], depth + 1);
      }
      if (!flat) pad(depth);
      out += "]";
    } else {
      out += j.dump();
    }
  };
  rec(rec, doc, 0);
  out += "\n";
  return out;
}

koopman::TrajectorySet read_trajectory_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) input_error("cannot open data file " + path.string());
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (header.empty() && std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") != std::string::npos) header = split_csv_line(line);
  }
  if (header.empty()) input_error(path.string() + " is empty");

  std::optional<std::size_t> id_col, t_col;
  std::vector<std::size_t> feature_cols;
  koopman::TrajectorySet data;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == "trajectory_id") id_col = c;
    else if (header[c] == "t") t_col = c;
    else {
      if (header[c].empty()) input_error("empty column name in " + path.string());
      feature_cols.push_back(c);
      data.feature_names.push_back(header[c]);
    }
  }
  if (!id_col || !t_col) input_error(path.string() + " needs 'trajectory_id' and 't' columns");
  if (feature_cols.empty()) input_error(path.string() + " has no feature columns");

  std::map<std::string, bool> finished;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_csv_line(line);
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (cells.size() != header.size()) input_error("wrong number of cells at " + where);
    const std::string& id = cells[*id_col];
    if (id.empty()) input_error("empty trajectory_id at " + where);
    const double tv = parse_number(cells[*t_col], where);
    if (tv < 0 || tv != std::floor(tv)) input_error("t must be a non-negative integer at " + where);

    if (data.trajectories.empty() || data.trajectories.back().id != id) {
      if (finished.contains(id)) input_error("rows of trajectory '" + id + "' are not contiguous");
      if (!data.trajectories.empty()) finished[data.trajectories.back().id] = true;
      data.trajectories.push_back({id, {}});
    }
    koopman::Snapshot snap;
    snap.time_index = static_cast<std::size_t>(tv);
    for (std::size_t c : feature_cols) snap.values.push_back(parse_number(cells[c], where));
    auto& traj = data.trajectories.back();
    if (!traj.snapshots.empty() && snap.time_index != traj.snapshots.back().time_index + 1)
      input_error("t must increase by 1 within trajectory '" + id + "' at " + where);
    traj.snapshots.push_back(std::move(snap));
  }
  if (data.trajectories.empty()) input_error(path.string() + " has no data rows");
  data.validate();
  return data;
}

koopman::DictionaryHash hash_document(const json& doc) {
  const std::string canonical = doc.dump();
  koopman::DictionaryHash out{};
  unsigned int len = 0;
  if (EVP_Digest(canonical.data(), canonical.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 ||
      len != out.size())
    throw Error(ErrorKind::Io, "SHA-256 digest failed");
  return out;
}

DictionarySpec parse_dictionary(const json& doc, const std::vector<std::string>& feature_names) {
  if (!doc.is_array() || doc.empty()) input_error("dictionary must be a non-empty array");
  koopman::Dictionary dict(feature_names.size());

  auto feature_index = [&](const std::string& name) -> std::size_t {
    auto it = std::find(feature_names.begin(), feature_names.end(), name);
    if (it == feature_names.end()) input_error("unknown feature '" + name + "'");
    return static_cast<std::size_t>(it - feature_names.begin());
  };
  auto observable_index = [&](const std::string& id) -> std::size_t {
    try {
      return dict.index_of(id);
    } catch (const Error&) {
      input_error("unknown observable '" + id + "' (observables must be defined before use)");
    }
  };

  for (const auto& entry : doc) {
    if (!entry.is_object()) input_error("dictionary entries must be objects");
    const std::string id = entry.at("id").get<std::string>();
    const std::string kind = entry.at("kind").get<std::string>();
    const json params = entry.value("params", json::object());
    auto arg = [&](const char* key) { return observable_index(params.at(key).get<std::string>()); };

    koopman::ObservableKind k;
    if (kind == "coordinate") {
      k = koopman::kind::Coordinate{feature_index(params.at("feature").get<std::string>())};
    } else if (kind == "sin") {
      k = koopman::kind::Sine{arg("arg")};
    } else if (kind == "cos") {
      k = koopman::kind::Cosine{arg("arg")};
    } else if (kind == "monomial") {
      std::vector<unsigned> exps(feature_names.size(), 0);
      for (const auto& [name, e] : params.at("exponents").items()) {
        const long long v = e.get<long long>();
        if (v < 0) input_error("monomial '" + id + "' has a negative exponent");
        exps[feature_index(name)] = static_cast<unsigned>(v);
      }
      k = koopman::kind::Monomial{std::move(exps)};
    } else if (kind == "delay") {
      const long long lag = params.at("lag").get<long long>();
      if (lag < 1) input_error("delay '" + id + "' needs a positive lag");
      k = koopman::kind::Delay{arg("base"), static_cast<std::size_t>(lag)};
    } else if (kind == "composition") {
      if (params.contains("function")) {
        const std::string fn = params.at("function").get<std::string>();
        auto parsed = koopman::parse_unary(fn);
        if (!parsed) input_error("unknown function '" + fn + "' in '" + id + "'");
        k = koopman::kind::Unary{*parsed, arg("arg")};
      } else {
        koopman::kind::Linear lin;
        for (const auto& term : params.at("terms"))
          lin.terms.emplace_back(observable_index(term.at("id").get<std::string>()),
                                 term.at("coef").get<double>());
        lin.offset = params.value("offset", 0.0);
        k = std::move(lin);
      }
    } else {
      input_error("unknown observable kind '" + kind + "' for '" + id + "'");
    }

    std::optional<koopman::Dependence> declared;
    if (entry.contains("depends_on")) {
      koopman::Dependence deps;
      for (const auto& ref : entry.at("depends_on").get<std::vector<std::string>>()) {
        if (ref.rfind("feature:", 0) == 0) {
          deps.features.insert(feature_index(ref.substr(8)));
        } else if (std::any_of(dict.observables().begin(), dict.observables().end(),
                               [&](const auto& o) { return o.id == ref; })) {
          deps.observables.insert(dict.index_of(ref));
        } else {
          deps.features.insert(feature_index(ref));
        }
      }
      declared = std::move(deps);
    }
    dict.add(id, std::move(k), std::move(declared));
  }
  return {std::move(dict), hash_document(doc)};
}

int cmd_fit(const RunOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded("fit", err, [&] {
    const Config cfg = load_config(opts);
    const Tolerances tol = tolerances(cfg, opts);
    const fs::path model_path =
        opts.out ? *opts.out : (cfg.doc.contains("model") ? cfg.path_of("model") : fs::path());
    if (model_path.empty()) input_error("fit needs an output path (--out or 'model')");

    FitRun run = run_fit(cfg, tol);
    const auto features = output_features(cfg, run.data);
    const koopman::Matrix outputs = koopman::feature_columns(run.data, run.lifted, features);
    const koopman::EigenSystem es = koopman::eigendecompose(run.km);
    koopman::SpectralTriple triple = koopman::build_spectral_triple(es, run.lifted, outputs, tol.svd_tol);
    triple.dictionary_hash = run.dict.hash;
    for (std::size_t f : features) triple.output_names.push_back(run.data.feature_names[f]);
    for (const auto& t : run.data.trajectories) triple.initial_condition_ids.push_back(t.id);

    const auto& dict = run.dict.dictionary;
    json rows = json::array();
    for (std::size_t i = 0; i < dict.size(); ++i) {
      const double r = run.residuals(static_cast<Eigen::Index>(i));
      rows.push_back({{"observable", dict[i].id},
                      {"residual", r},
                      {"closed", r < tol.closure_tol}});
    }
    json eig = json::array();
    for (Eigen::Index j = 0; j < es.eigenvalues.size(); ++j)
      eig.push_back(complex_json(es.eigenvalues(j)));
    json report = {
        {"observables", [&] {
           json ids = json::array();
           for (const auto& o : dict.observables()) ids.push_back(o.id);
           return ids;
         }()},
        {"koopman_matrix", matrix_json(run.km.A)},
        {"fit_residual", run.km.fit_residual},
        {"rank_used", run.km.rank_used},
        {"svd_tolerance", run.km.svd_tolerance},
        {"condition_number", run.km.condition},
        {"row_residuals", std::move(rows)},
        {"eigenvalues", std::move(eig)},
        {"biorthogonality_error", es.biorthogonality_error},
        {"eigen_residual", es.eigen_residual},
        {"columns", run.lifted.columns()},
        {"dictionary_hash", koopman::hash_to_hex(run.dict.hash)},
    };

    const auto bytes = koopman::serialize_model(triple);
    const std::string sidecar = dump_json(koopman::model_to_json(triple));
    const std::string report_text = dump_json(report);
    koopman::detail::write_atomically(
        model_path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
    write_text(with_suffix(model_path, ".json"), sidecar);
    write_text(with_suffix(model_path, ".report.json"), report_text);

    out << "fit: " << run.lifted.columns() << " column pairs, d = " << dict.size()
        << ", rank " << run.km.rank_used << ", condition " << format_double(run.km.condition)
        << "\n";
    for (std::size_t i = 0; i < dict.size(); ++i) {
      const double r = run.residuals(static_cast<Eigen::Index>(i));
      out << "  row " << dict[i].id << ": residual " << format_double(r)
          << (r < tol.closure_tol ? "  closed" : "  NOT closed") << "\n";
    }
    out << "model written to " << model_path.string() << "\n";
    return kExitOk;
  });
}

int cmd_predict(const RunOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded("predict", err, [&] {
    const Config cfg = load_config(opts);
    const json& section = cfg.section("predict");
    const fs::path model_path = opts.model ? *opts.model : cfg.path_of("model");
    const koopman::SpectralTriple triple = koopman::load_model(model_path);
    if (cfg.doc.contains("dictionary")) check_model_hash(cfg, triple);

    const long long horizon = opts.horizon.value_or(cfg.get_or<long long>(section, "horizon", 1));
    if (horizon < 0) input_error("horizon must be non-negative");

    std::size_t x0 = 0;
    const std::string sel =
        opts.x0.value_or(section.contains("x0") ? section["x0"].is_string()
                                                      ? section["x0"].get<std::string>()
                                                      : std::to_string(section["x0"].get<long long>())
                                                : std::string());
    if (!sel.empty()) {
      auto it = std::find(triple.initial_condition_ids.begin(), triple.initial_condition_ids.end(), sel);
      if (it != triple.initial_condition_ids.end()) {
        x0 = static_cast<std::size_t>(it - triple.initial_condition_ids.begin());
      } else if (sel.find_first_not_of("0123456789") == std::string::npos &&
                 std::stoull(sel) < triple.M()) {
        x0 = std::stoull(sel);
      } else {
        input_error("unknown initial condition '" + sel + "'");
      }
    }

    std::vector<koopman::CVector> rows;
    for (long long k = 0; k <= horizon; ++k)
      rows.push_back(koopman::predict(triple, x0, static_cast<std::uint64_t>(k)));
    std::vector<bool> complex_out(triple.h(), false);
    for (const auto& r : rows)
      for (std::size_t i = 0; i < triple.h(); ++i)
        if (std::abs(r(static_cast<Eigen::Index>(i)).imag()) >= 1e-8) complex_out[i] = true;

    std::ostringstream csv;
    csv << "k";
    for (std::size_t i = 0; i < triple.h(); ++i) {
      const std::string name = triple.output_names.empty() || triple.output_names[i].empty()
                                   ? "h" + std::to_string(i)
                                   : triple.output_names[i];
      if (complex_out[i]) csv << "," << name << "_re," << name << "_im";
      else csv << "," << name;
    }
    csv << "\n";
    for (std::size_t k = 0; k < rows.size(); ++k) {
      csv << k;
      for (std::size_t i = 0; i < triple.h(); ++i) {
        const auto z = rows[k](static_cast<Eigen::Index>(i));
        csv << "," << format_double(z.real());
        if (complex_out[i]) csv << "," << format_double(z.imag());
      }
      csv << "\n";
    }
    const std::optional<fs::path> dest = output_path(cfg, section, opts);
    if (dest) write_text(*dest, csv.str());
    else out << csv.str();
    return kExitOk;
  });
}

int cmd_spectrum(const RunOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded("spectrum", err, [&] {
    const Config cfg = load_config(opts);
    const json& section = cfg.section("spectrum");
    const koopman::TrajectorySet data = read_trajectory_csv(cfg.path_of("data"));
    const std::string column =
        opts.column.value_or(cfg.get_or<std::string>(section, "column", std::string()));
    if (column.empty()) input_error("spectrum needs a column (--column)");
    const std::string imag_column = cfg.get_or<std::string>(section, "imag_column", std::string());
    const double peak_threshold = cfg.get_or(section, "peak_threshold", 0.5);
    const bool refine = cfg.get_or(section, "refine", true);
    const std::string traj_id = cfg.get_or<std::string>(section, "trajectory", std::string());

    auto col_index = [&](const std::string& name) {
      auto it = std::find(data.feature_names.begin(), data.feature_names.end(), name);
      if (it == data.feature_names.end()) input_error("no column '" + name + "' in the data");
      return static_cast<std::size_t>(it - data.feature_names.begin());
    };
    const std::size_t re_col = col_index(column);
    const std::optional<std::size_t> im_col =
        imag_column.empty() ? std::nullopt : std::optional(col_index(imag_column));
    const koopman::Trajectory* traj = &data.trajectories.front();
    if (!traj_id.empty()) {
      auto it = std::find_if(data.trajectories.begin(), data.trajectories.end(),
                             [&](const auto& t) { return t.id == traj_id; });
      if (it == data.trajectories.end()) input_error("no trajectory '" + traj_id + "'");
      traj = &*it;
    }

    std::vector<koopman::EigenfrequencyCandidate> peaks;
    koopman::FrequencySpectrum spectrum;
    if (im_col) {
      std::vector<koopman::Complex> z;
      for (const auto& s : traj->snapshots) z.emplace_back(s.values[re_col], s.values[*im_col]);
      spectrum = koopman::fft_amplitude_spectrum(std::span<const koopman::Complex>(z));
      peaks = koopman::find_eigenfrequencies(std::span<const koopman::Complex>(z), peak_threshold, refine);
    } else {
      std::vector<double> x;
      for (const auto& s : traj->snapshots) x.push_back(s.values[re_col]);
      spectrum = koopman::fft_amplitude_spectrum(std::span<const double>(x));
      peaks = koopman::find_eigenfrequencies(std::span<const double>(x), peak_threshold, refine);
    }

    std::ostringstream csv;
    csv << "omega,amplitude,eigenvalue_re,eigenvalue_im,average_re,average_im\n";
    for (const auto& p : peaks)
      csv << format_double(p.omega) << "," << format_double(p.amplitude) << ","
          << format_double(p.eigenvalue.real()) << "," << format_double(p.eigenvalue.imag()) << ","
          << format_double(p.average.real()) << "," << format_double(p.average.imag()) << "\n";

    std::optional<std::string> full;
    if (section.contains("spectrum_out")) {
      std::ostringstream s;
      s << "omega,amplitude\n";
      for (std::size_t b = 0; b < spectrum.amplitudes.size(); ++b)
        s << format_double(spectrum.frequencies[b]) << "," << format_double(spectrum.amplitudes[b]) << "\n";
      full = s.str();
    }
    const std::optional<fs::path> dest = output_path(cfg, section, opts);
    if (dest) write_text(*dest, csv.str());
    else out << csv.str();
    if (full) {
      fs::path p = section["spectrum_out"].get<std::string>();
      write_text(p.is_absolute() ? p : cfg.base / p, *full);
    }
    return kExitOk;
  });
}

int cmd_reduce(const RunOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded("reduce", err, [&] {
    const Config cfg = load_config(opts);
    const Tolerances tol = tolerances(cfg, opts);
    const json& section = cfg.section("reduce");
    FitRun run = run_fit(cfg, tol);
    const std::optional<fs::path> model_path =
        opts.model ? opts.model : (cfg.doc.contains("model") ? std::optional(cfg.path_of("model")) : std::nullopt);
    if (model_path) {
      const koopman::SpectralTriple triple = koopman::load_model(*model_path);
      if (triple.dictionary_hash != run.dict.hash)
        input_error("model " + model_path->string() + " was fitted with a different dictionary");
    }

    koopman::RepresentationThresholds th;
    th.zero_threshold = tol.zero_threshold;
    th.closure_tol = tol.closure_tol;
    th.search.max_generators = cfg.get_or<std::size_t>(section, "max_generators", 3);
    th.search.exhaustive = cfg.get_or(section, "exhaustive", false);
    if (th.search.max_generators == 0) input_error("max_generators must be positive");

    const auto report = koopman::analyze_representation(run.km, run.residuals, run.dict.dictionary,
                                                        run.lifted, th, run.data.feature_names);
    json doc = koopman::to_json(report, run.data.feature_names);
    doc["zero_threshold"] = th.zero_threshold;
    doc["closure_tol"] = th.closure_tol;
    doc["dictionary_hash"] = koopman::hash_to_hex(run.dict.hash);

    const std::optional<fs::path> dest = output_path(cfg, section, opts);
    if (dest) {
      write_text(*dest, dump_json(doc));
      write_text(with_suffix(*dest, ".txt"), report.narrative);
    }
    out << report.narrative;
    return kExitOk;
  });
}

}  // namespace koop
