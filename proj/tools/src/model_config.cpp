#include "model_config.hpp"

#include "errors.hpp"

#include "hglmm/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

namespace hglmm::cli {

using nlohmann::json;

namespace {

// Typed access to one JSON object that remembers which keys were read, so
// anything left over can be reported as unknown.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(name() + ": expected an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  const json& at(const std::string& key) {
    if (!has(key)) throw ConfigError(where(key) + ": required key is missing");
    return j_.at(key);
  }

  std::string str(const std::string& key) {
    const json& v = at(key);
    if (!v.is_string()) throw ConfigError(where(key) + ": expected a string");
    return v.get<std::string>();
  }
  std::string str(const std::string& key, const std::string& fallback) {
    return has(key) ? str(key) : fallback;
  }

  double num(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_number()) throw ConfigError(where(key) + ": expected a number");
    return v.get<double>();
  }

  long long integer(const std::string& key, long long fallback) {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_number_integer()) throw ConfigError(where(key) + ": expected an integer");
    return v.get<long long>();
  }

  bool flag(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_boolean()) throw ConfigError(where(key) + ": expected true or false");
    return v.get<bool>();
  }

  std::vector<std::string> strings(const std::string& key) {
    if (!has(key)) return {};
    const json& v = j_.at(key);
    if (!v.is_array()) throw ConfigError(where(key) + ": expected an array of strings");
    std::vector<std::string> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_string()) {
        throw ConfigError(where(key) + "[" + std::to_string(i) + "]: expected a string");
      }
      out.push_back(v[i].get<std::string>());
    }
    return out;
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw ConfigError(where(item.key()) + ": unknown key");
    }
  }

  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  std::string name() const { return path_.empty() ? "config" : path_; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

laplace::Mode parse_mode(const std::string& s, const std::string& where) {
  if (s == "reml") return laplace::Mode::reml;
  if (s == "ml") return laplace::Mode::ml;
  throw ConfigError(where + ": expected \"ml\" or \"reml\", got \"" + s + "\"");
}

datamodels::Family parse_family(Fields& f) {
  datamodels::Family fam;
  const std::string name = f.str("family");
  try {
    fam.kind = datamodels::family_from_string(name);
  } catch (const hglmm::Error&) {
    throw ConfigError(f.where("family") + ": unknown family \"" + name + "\"");
  }
  fam.phi = f.num("phi", 1.0);
  if (!(fam.phi > 0.0)) throw ConfigError(f.where("phi") + ": must be positive");
  return fam;
}

ComponentConfig parse_component(const json& j, const std::string& path, const std::filesystem::path& base) {
  Fields f(j, path);
  ComponentConfig c;
  c.type = f.str("type");
  c.label = f.str("label", "");
  if (c.type == "nugget") {
  } else if (c.type == "random_intercept") {
    c.group = f.str("group");
  } else if (c.type == "ar1") {
    c.time = f.str("time");
    c.group = f.str("group", "");
  } else if (c.type == "exponential") {
    c.coords = f.strings("coords");
    if (c.coords.size() != 2) throw ConfigError(f.where("coords") + ": expected two column names");
    c.nugget = f.flag("nugget", true);
  } else if (c.type == "car" || c.type == "sar") {
    c.region = f.str("region");
    c.edges = base / f.str("edges");
    c.allow_negative_rho = f.flag("allow_negative_rho", false);
  } else {
    throw ConfigError(f.where("type") + ": unknown component type \"" + c.type +
                      "\" (nugget, random_intercept, ar1, exponential, car, sar)");
  }
  f.finish();
  return c;
}

simulate::ExperimentConfig parse_experiment(const json& j) {
  Fields f(j, "experiment");
  simulate::ExperimentConfig e;
  if (f.has("family")) e.family = parse_family(f);
  if (f.has("beta")) {
    const json& b = f.at("beta");
    if (!b.is_array() || b.size() != 4) throw ConfigError("experiment.beta: expected four numbers");
    for (std::size_t i = 0; i < 4; ++i) {
      if (!b[i].is_number()) throw ConfigError("experiment.beta[" + std::to_string(i) + "]: expected a number");
      e.beta(static_cast<Index>(i)) = b[i].get<double>();
    }
  }
  e.sigma2 = f.num("sigma2", e.sigma2);
  e.range = f.num("range", e.range);
  e.nugget = f.num("nugget", e.nugget);
  e.n_obs = static_cast<int>(f.integer("n_obs", e.n_obs));
  e.pred_grid = static_cast<int>(f.integer("pred_grid", e.pred_grid));
  e.n_replicates = static_cast<int>(f.integer("n_replicates", e.n_replicates));
  e.seed = static_cast<std::uint64_t>(f.integer("seed", static_cast<long long>(e.seed)));
  e.level = f.num("level", e.level);
  if (f.has("mode")) e.mode = parse_mode(f.str("mode"), "experiment.mode");
  e.fit.search.max_evals = static_cast<int>(f.integer("max_evals", e.fit.search.max_evals));
  f.finish();
  try {
    e.validate();
  } catch (const hglmm::Error& err) {
    throw ConfigError(std::string("experiment: ") + err.what());
  }
  return e;
}

std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

std::vector<std::string> row_ids(const CsvTable& t, const std::string& column, const std::string& prefix) {
  if (!column.empty()) return t.text(column);
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < t.rows(); ++i) ids.push_back(prefix + std::to_string(i + 1));
  return ids;
}

Matrix design(const CsvTable& t, bool intercept, const std::vector<std::string>& terms) {
  const auto n = static_cast<Index>(t.rows());
  Matrix x(n, (intercept ? 1 : 0) + static_cast<Index>(terms.size()));
  Index col = 0;
  if (intercept) x.col(col++).setOnes();
  for (const auto& term : terms) x.col(col++) = design_term(t, term);
  return x;
}

Matrix coords_of(const CsvTable& t, const std::vector<std::string>& cols) {
  Matrix c(static_cast<Index>(t.rows()), 2);
  c.col(0) = to_vector(t.numbers(cols[0]));
  c.col(1) = to_vector(t.numbers(cols[1]));
  return c;
}

// Symmetric 0/1 adjacency over `regions` from an edge list with columns
// from,to. Edges touching regions outside the list are skipped.
Matrix adjacency(const std::vector<std::string>& regions, const std::filesystem::path& edges_path) {
  std::unordered_map<std::string, Index> index;
  for (std::size_t i = 0; i < regions.size(); ++i) {
    if (!index.emplace(regions[i], static_cast<Index>(i)).second) {
      throw DataError("region '" + regions[i] + "' appears more than once");
    }
  }
  const auto edges = CsvTable::read(edges_path);
  const auto from = edges.text("from");
  const auto to = edges.text("to");
  const auto n = static_cast<Index>(regions.size());
  Matrix w = Matrix::Zero(n, n);
  for (std::size_t e = 0; e < from.size(); ++e) {
    const auto a = index.find(from[e]);
    const auto b = index.find(to[e]);
    if (a == index.end() || b == index.end() || a->second == b->second) continue;
    w(a->second, b->second) = 1.0;
    w(b->second, a->second) = 1.0;
  }
  return w;
}

void require(const CsvTable& t, const std::string& column, const std::string& field) {
  if (!column.empty() && !t.has(column)) {
    throw ConfigError(field + ": column '" + column + "' not found in " + t.source());
  }
}

void require_component_columns(const CsvTable& t, const std::vector<ComponentConfig>& comps) {
  for (std::size_t k = 0; k < comps.size(); ++k) {
    const auto& c = comps[k];
    const std::string at = "covariance[" + std::to_string(k) + "]";
    require(t, c.group, at + ".group");
    require(t, c.time, at + ".time");
    require(t, c.region, at + ".region");
    for (const auto& col : c.coords) require(t, col, at + ".coords");
  }
}

std::vector<int> levels_of(const std::vector<int>& groups) {
  std::vector<int> levels(groups);
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  return levels;
}

}  // namespace

ModelConfig parse_config(const std::string& text, const std::filesystem::path& base_dir,
                         const std::string& source) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(source + ": " + e.what());
  }
  Fields f(j, "");
  ModelConfig c;
  c.source = source;

  c.has_model = f.has("response") || f.has("data") || f.has("covariance") || f.has("family");
  json model = json::object();
  if (c.has_model) {
    c.data = base_dir / f.str("data");
    c.id = f.str("id", "");
    c.response = f.str("response");
    c.trials = f.str("trials", "");
    c.family = parse_family(f);
    c.intercept = f.flag("intercept", true);
    c.fixed = f.strings("fixed");
    if (!c.intercept && c.fixed.empty()) throw ConfigError("fixed: the model needs at least one fixed effect");
    const json& cov = f.at("covariance");
    if (!cov.is_array() || cov.empty()) throw ConfigError("covariance: expected a non-empty array");
    for (std::size_t k = 0; k < cov.size(); ++k) {
      c.covariance.push_back(parse_component(cov[k], "covariance[" + std::to_string(k) + "]", base_dir));
    }
    if (f.has("bounds")) {
      const json& b = f.at("bounds");
      if (!b.is_object()) throw ConfigError("bounds: expected an object of [lower, upper] pairs");
      for (const auto& item : b.items()) {
        const json& v = item.value();
        if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
          throw ConfigError("bounds." + item.key() + ": expected [lower, upper]");
        }
        c.bounds[item.key()] = {v[0].get<double>(), v[1].get<double>()};
      }
    }
    if (f.has("initial")) {
      const json& b = f.at("initial");
      if (!b.is_object()) throw ConfigError("initial: expected an object of numbers");
      for (const auto& item : b.items()) {
        if (!item.value().is_number()) throw ConfigError("initial." + item.key() + ": expected a number");
        c.initial[item.key()] = item.value().get<double>();
      }
    }
    c.max_evals = static_cast<int>(f.integer("max_evals", c.max_evals));
    if (c.max_evals < 1) throw ConfigError("max_evals: must be positive");
    for (const char* key : {"data", "id", "response", "trials", "family", "phi", "intercept", "fixed",
                            "covariance", "bounds", "initial", "max_evals"}) {
      if (j.contains(key)) model[key] = j.at(key);
    }
  }
  if (f.has("mode")) c.mode = parse_mode(f.str("mode"), "mode");
  c.seed = static_cast<std::uint64_t>(f.integer("seed", 0));
  c.level = f.num("level", 0.9);
  if (!(c.level > 0.0 && c.level < 1.0)) throw ConfigError("level: must lie in (0, 1)");
  if (f.has("out_dir")) c.out_dir = base_dir / f.str("out_dir");
  if (f.has("prediction")) {
    Fields p(f.at("prediction"), "prediction");
    c.prediction = PredictionConfig{base_dir / p.str("data"), p.str("id", "")};
    p.finish();
  }
  c.p_values = f.str("p_values", "normal");
  if (c.p_values != "normal" && c.p_values != "t") {
    throw ConfigError("p_values: expected \"normal\" or \"t\", got \"" + c.p_values + "\"");
  }
  if (f.has("experiment")) {
    c.experiment = parse_experiment(f.at("experiment"));
    c.canonical_experiment = j.at("experiment").dump();
  }
  f.finish();
  if (!c.has_model && !c.experiment) {
    throw ConfigError(source + ": neither a model (data, response, family, covariance) nor an experiment");
  }
  c.canonical_model = model.dump();
  return c;
}

ModelConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return parse_config(os.str(), path.parent_path(), path.string());
}

Vector design_term(const CsvTable& table, const std::string& term) {
  Vector out = Vector::Ones(static_cast<Index>(table.rows()));
  std::istringstream is(term);
  std::string factor;
  bool any = false;
  while (std::getline(is, factor, ':')) {
    int power = 1;
    const auto caret = factor.find('^');
    std::string column = factor;
    if (caret != std::string::npos) {
      column = factor.substr(0, caret);
      const std::string p = factor.substr(caret + 1);
      if (p.empty() || p.find_first_not_of("0123456789") != std::string::npos || std::stoi(p) < 1) {
        throw ConfigError("fixed: bad power in term '" + term + "'");
      }
      power = std::stoi(p);
    }
    if (column.empty()) throw ConfigError("fixed: empty column in term '" + term + "'");
    if (!table.has(column)) {
      throw ConfigError("fixed: column '" + column + "' in term '" + term + "' not found in " + table.source());
    }
    const Vector v = to_vector(table.numbers(column));
    for (int k = 0; k < power; ++k) out.array() *= v.array();
    any = true;
  }
  if (!any) throw ConfigError("fixed: empty term");
  return out;
}

ModelInputs build_inputs(const ModelConfig& config) {
  if (!config.has_model) throw ConfigError(config.source.string() + ": no model section");
  ModelInputs in{CsvTable::read(config.data), {}, {}, {}, {}, {}};
  const CsvTable& t = in.table;
  if (t.rows() == 0) throw DataError(t.source() + ": no data rows");
  require(t, config.response, "response");
  require(t, config.trials, "trials");
  require(t, config.id, "id");
  require_component_columns(t, config.covariance);
  in.ids = row_ids(t, config.id, "");
  in.data.y = to_vector(t.numbers(config.response));
  if (!config.trials.empty()) {
    if (config.family.kind != datamodels::FamilyKind::binomial) {
      throw ConfigError("trials: only the binomial family takes trial counts");
    }
    in.data.trials = to_vector(t.numbers(config.trials));
  }
  try {
    datamodels::check_support(config.family, in.data);
  } catch (const hglmm::Error& e) {
    throw DataError(e.what());
  }

  in.x = design(t, config.intercept, config.fixed);
  if (config.intercept) in.x_names.push_back("Intercept");
  for (const auto& term : config.fixed) in.x_names.push_back(term);

  std::vector<covariance::CovComponent> comps;
  std::vector<std::string> labels;
  try {
    for (std::size_t k = 0; k < config.covariance.size(); ++k) {
      const auto& c = config.covariance[k];
      labels.push_back(c.label.empty() ? "c" + std::to_string(k) : c.label);
      if (c.type == "nugget") {
        comps.push_back(covariance::CovComponent::iid_nugget(static_cast<Index>(t.rows())));
      } else if (c.type == "random_intercept") {
        comps.push_back(covariance::CovComponent::random_intercept(t.integers(c.group)));
      } else if (c.type == "ar1") {
        comps.push_back(covariance::CovComponent::ar1(t.integers(c.time),
                                                      c.group.empty() ? std::vector<int>{} : t.integers(c.group)));
      } else if (c.type == "exponential") {
        comps.push_back(covariance::CovComponent::exponential_geo(coords_of(t, c.coords), c.nugget));
      } else {
        const Matrix w = adjacency(t.text(c.region), c.edges);
        comps.push_back(c.type == "car" ? covariance::CovComponent::car(w, c.allow_negative_rho)
                                        : covariance::CovComponent::sar(w, c.allow_negative_rho));
      }
    }
    in.spec = covariance::CovarianceSpec(std::move(comps), std::move(labels));
  } catch (const hglmm::Error& e) {
    throw DataError(e.what());
  }
  return in;
}

PredictionInputs build_prediction(const ModelConfig& config, const ModelInputs& inputs) {
  if (!config.prediction) throw ConfigError(config.source.string() + ": no prediction section");
  const auto t = CsvTable::read(config.prediction->data);
  if (t.rows() == 0) throw DataError(t.source() + ": no prediction rows");
  const auto m = static_cast<Index>(t.rows());
  require(t, config.prediction->id, "prediction.id");
  require_component_columns(t, config.covariance);
  PredictionInputs p;
  p.ids = row_ids(t, config.prediction->id, "p");
  p.x_u = design(t, config.intercept, config.fixed);
  p.meta.m = m;
  for (const auto& c : config.covariance) {
    covariance::ComponentPrediction cp;
    if (c.type == "random_intercept") {
      const auto levels = levels_of(inputs.table.integers(c.group));
      const auto groups = t.integers(c.group);
      cp.design = Matrix::Zero(m, static_cast<Index>(levels.size()));
      for (Index i = 0; i < m; ++i) {
        const auto it = std::lower_bound(levels.begin(), levels.end(), groups[static_cast<std::size_t>(i)]);
        if (it == levels.end() || *it != groups[static_cast<std::size_t>(i)]) {
          throw DataError(t.source() + ": group " + std::to_string(groups[static_cast<std::size_t>(i)]) +
                          " in column '" + c.group + "' does not occur in the fitted data");
        }
        cp.design(i, it - levels.begin()) = 1.0;
      }
    } else if (c.type == "ar1") {
      cp.times = t.integers(c.time);
      if (!c.group.empty()) cp.groups = t.integers(c.group);
    } else if (c.type == "exponential") {
      cp.coords = coords_of(t, c.coords);
    } else if (c.type == "car" || c.type == "sar") {
      auto regions = inputs.table.text(c.region);
      const auto extra = t.text(c.region);
      regions.insert(regions.end(), extra.begin(), extra.end());
      cp.joint_neighbors = adjacency(regions, c.edges);
    }
    p.meta.components.push_back(std::move(cp));
  }
  return p;
}

std::uint64_t fnv1a(const std::string& bytes, std::uint64_t state) {
  for (unsigned char ch : bytes) {
    state ^= ch;
    state *= 0x100000001b3ULL;
  }
  return state;
}

std::string config_hash(const ModelConfig& config, laplace::Mode mode) {
  std::uint64_t h = fnv1a(config.canonical_model);
  h = fnv1a(mode == laplace::Mode::ml ? "|ml|" : "|reml|", h);
  if (config.has_model) {
    h = fnv1a(read_bytes(config.data), h);
    for (const auto& c : config.covariance) {
      if (!c.edges.empty()) h = fnv1a(read_bytes(c.edges), h);
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace hglmm::cli
