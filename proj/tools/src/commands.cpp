#include "commands.hpp"

#include "errors.hpp"
#include "model_config.hpp"

#include "hglmm/error.hpp"
#include "hglmm/simulate.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace hglmm::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}
std::string g6(double v) { return fmt("%.6g", v); }
std::string full(double v) { return fmt("%.17g", v); }

std::string mode_name(laplace::Mode m) { return m == laplace::Mode::ml ? "ml" : "reml"; }

laplace::Mode effective_mode(const Options& opts, const ModelConfig& cfg) {
  if (!opts.mode) return cfg.mode;
  return *opts.mode == "ml" ? laplace::Mode::ml : laplace::Mode::reml;
}

double effective_level(const Options& opts, const ModelConfig& cfg) {
  const double level = opts.level.value_or(cfg.level);
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("--level must lie in (0, 1)");
  return level;
}

fs::path out_dir(const Options& opts, const ModelConfig& cfg) {
  if (opts.out_dir) return *opts.out_dir;
  if (!cfg.out_dir.empty()) return cfg.out_dir;
  return opts.config.parent_path() / "hglmm-out";
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read artifact " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

json fit_artifact_check(const fs::path& path) {
  json j = read_json(path);
  if (!j.is_object() || !j.contains("schema_version") || j["schema_version"] != kSchemaVersion ||
      j.value("command", "") != "fit") {
    throw ConfigError(path.string() + ": not a fit artifact with schema_version " + std::to_string(kSchemaVersion));
  }
  return j;
}

json to_json(const Vector& v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

json to_json(const Matrix& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) rows.push_back(to_json(Vector(m.row(i).transpose())));
  return rows;
}

Vector vector_from(const json& a) {
  Vector v(static_cast<Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Index>(i)) = a[i].get<double>();
  return v;
}

Matrix matrix_from(const json& rows, Index cols) {
  Matrix m(static_cast<Index>(rows.size()), cols);
  for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Index>(i)) = vector_from(rows[i]).transpose();
  return m;
}

void check_overrides(const ModelConfig& cfg, const ModelInputs& in) {
  const auto space = optimizer::ParamSpace::defaults(in.spec, cfg.family, in.data);
  auto known = [&](const std::string& name, const char* field) {
    try {
      space.find(name);
    } catch (const hglmm::Error&) {
      std::string names;
      for (const auto& e : space.entries()) names += (names.empty() ? "" : ", ") + e.name;
      throw ConfigError(std::string(field) + "." + name + ": no such parameter (" + names + ")");
    }
  };
  for (const auto& [name, b] : cfg.bounds) known(name, "bounds");
  for (const auto& [name, v] : cfg.initial) known(name, "initial");
}

std::string parameter_table(const optimizer::FitResult& fit) {
  std::ostringstream os;
  std::size_t width = 9;
  for (const auto& e : fit.space.entries()) width = std::max(width, e.name.size());
  width += 2;
  os << std::left << std::setw(static_cast<int>(width)) << "Parameter" << std::right << std::setw(14) << "Estimate"
     << std::setw(14) << "Lower" << std::setw(14) << "Upper" << "  Bound\n";
  const Vector p = fit.params();
  for (std::size_t i = 0; i < fit.space.size(); ++i) {
    const auto& e = fit.space.entries()[i];
    const int b = fit.bound_activity[i];
    os << std::left << std::setw(static_cast<int>(width)) << e.name << std::right << std::setw(14)
       << g6(p(static_cast<Index>(i))) << std::setw(14) << g6(e.lower) << std::setw(14) << g6(e.upper) << "  "
       << (b < 0 ? "lower" : b > 0 ? "upper" : "-") << '\n';
  }
  return os.str();
}

json fixed_effects_json(const inference::FixedEffectsTable& t, double level) {
  const auto iv = inference::intervals(t, level);
  json rows = json::array();
  for (std::size_t j = 0; j < t.names.size(); ++j) {
    const auto k = static_cast<Index>(j);
    rows.push_back({{"effect", t.names[j]},
                    {"estimate", t.estimate(k)},
                    {"se_u", t.se_u(k)},
                    {"se_c", t.se_c(k)},
                    {"t_value", t.t_value(k)},
                    {"p_value", t.p_value(k)},
                    {"lower", iv.lower(k)},
                    {"upper", iv.upper(k)}});
  }
  return {{"p_values", t.df_policy == inference::DfPolicy::normal ? "normal" : "t"},
          {"df", t.df},
          {"level", level},
          {"rows", rows},
          {"c_beta", to_json(t.c_beta)},
          {"var_corrected", to_json(t.var_corrected)}};
}

std::string report_json(const simulate::ExperimentReport& r, const simulate::ExperimentConfig& e,
                        const std::string& hash) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"effect", row.name},
                    {"bias", row.bias},
                    {"mse", row.mse},
                    {"ratio", row.ratio},
                    {"coverage_corrected", row.coverage_corrected},
                    {"coverage_uncorrected", row.coverage_uncorrected}});
  }
  json j = {{"schema_version", kSchemaVersion},
            {"command", "simulate"},
            {"config_hash", hash},
            {"seed", e.seed},
            {"family", r.family},
            {"phi", e.family.phi},
            {"mode", mode_name(e.mode)},
            {"level", r.level},
            {"replicates", r.replicates},
            {"completed", r.completed},
            {"failures", r.failures},
            {"failure_rate", r.failure_rate()},
            {"failure_messages", r.failure_messages},
            {"worst_max_grad", r.worst_max_grad},
            {"rows", rows}};
  return j.dump(2) + "\n";
}

}  // namespace

std::string fixed_effects_table(const inference::FixedEffectsTable& t) {
  std::ostringstream os;
  std::size_t width = 6;
  for (const auto& n : t.names) width = std::max(width, n.size());
  width += 2;
  os << std::left << std::setw(static_cast<int>(width)) << "Effect" << std::right;
  for (const char* h : {"Est.", "s.e._u", "s.e._c", "t-val.", "p-val."}) os << std::setw(13) << h;
  os << '\n';
  for (std::size_t j = 0; j < t.names.size(); ++j) {
    const auto k = static_cast<Index>(j);
    os << std::left << std::setw(static_cast<int>(width)) << t.names[j] << std::right;
    for (double v : {t.estimate(k), t.se_u(k), t.se_c(k), t.t_value(k), t.p_value(k)}) os << std::setw(13) << g6(v);
    os << '\n';
  }
  return os.str();
}

std::string ranking_table(const std::vector<optimizer::RankedFit>& ranking, const std::vector<std::string>& names) {
  std::ostringstream os;
  std::size_t width = 5;
  for (const auto& n : names) width = std::max(width, n.size());
  width += 2;
  os << std::left << std::setw(6) << "Rank" << std::setw(static_cast<int>(width)) << "Model" << std::right
     << std::setw(14) << "-2LL" << std::setw(14) << "AIC" << std::setw(8) << "Params" << "  Mode\n";
  for (std::size_t r = 0; r < ranking.size(); ++r) {
    const auto& f = ranking[r];
    os << std::left << std::setw(6) << (r + 1) << std::setw(static_cast<int>(width)) << names[f.index]
       << std::right << std::setw(14) << fmt("%.10g", f.minus2ll) << std::setw(14) << fmt("%.10g", f.aic)
       << std::setw(8) << f.param_count << "  " << (f.mode == laplace::Mode::ml ? "ML" : "REML") << '\n';
  }
  return os.str();
}

int cmd_fit(const Options& opts, std::ostream& out, std::ostream& err) {
  const auto cfg = load_config(opts.config);
  const auto mode = effective_mode(opts, cfg);
  const double level = effective_level(opts, cfg);
  const auto in = build_inputs(cfg);
  check_overrides(cfg, in);

  optimizer::FitOptions fo;
  fo.mode = mode;
  fo.bounds = cfg.bounds;
  fo.initial = cfg.initial;
  fo.search.max_evals = cfg.max_evals;
  if (opts.verbose) {
    fo.on_evaluation = [&err](const optimizer::EvaluationTrace& t) {
      err << "eval " << t.evaluation << (t.failed ? " failed" : " loglik " + full(t.loglik)) << " best "
          << full(t.best_loglik) << " params";
      for (Index i = 0; i < t.params.size(); ++i) err << ' ' << g6(t.params(i));
      err << '\n';
    };
  }
  const auto fit = optimizer::fit(in.data, cfg.family, in.x, in.spec, fo);
  const auto policy = cfg.p_values == "t" ? inference::DfPolicy::t_residual : inference::DfPolicy::normal;
  const auto table = inference::fixed_effects(fit, policy, in.x_names);

  json params = json::array();
  const Vector p = fit.params();
  for (std::size_t i = 0; i < fit.space.size(); ++i) {
    const auto& e = fit.space.entries()[i];
    params.push_back({{"name", e.name},
                      {"kind", optimizer::to_string(e.kind)},
                      {"value", p(static_cast<Index>(i))},
                      {"lower", e.lower},
                      {"upper", e.upper},
                      {"bound", fit.bound_activity[i]}});
  }
  json data = {{"ids", in.ids}, {"response", to_json(in.data.y)}};
  if (in.data.trials.size() > 0) data["trials"] = to_json(in.data.trials);
  const json artifact = {
      {"schema_version", kSchemaVersion},
      {"command", "fit"},
      {"config_hash", config_hash(cfg, mode)},
      {"seed", opts.seed.value_or(cfg.seed)},
      {"family", datamodels::to_string(cfg.family.kind)},
      {"mode", mode_name(mode)},
      {"n", in.data.size()},
      {"status", optimizer::to_string(fit.status)},
      {"minus2ll", fit.minus2ll},
      {"loglik", fit.loglik},
      {"aic", fit.aic()},
      {"aic_param_count", fit.aic_param_count()},
      {"loglik_parts",
       {{"data_term", fit.parts.data_term},
        {"gaussian_term", fit.parts.gaussian_term},
        {"logdet_term", fit.parts.logdet_term}}},
      {"evaluations", fit.evaluations},
      {"search_iterations", fit.search_iterations},
      {"inner_iterations", fit.inner_iterations},
      {"max_grad", fit.max_grad},
      {"search_settings", fit.search_settings},
      {"parameters", params},
      {"fixed_effects", fixed_effects_json(table, level)},
      {"data", data},
      {"design", {{"columns", in.x_names}, {"rows", to_json(in.x)}}}};

  std::ostringstream text;
  text << "family: " << datamodels::to_string(cfg.family.kind) << "  mode: " << (mode == laplace::Mode::ml ? "ML" : "REML")
       << "  n: " << in.data.size() << "  status: " << optimizer::to_string(fit.status) << '\n';
  text << "-2LL: " << fmt("%.10g", fit.minus2ll) << "  AIC: " << fmt("%.10g", fit.aic())
       << "  evaluations: " << fit.evaluations << "  max|v|: " << fmt("%.3g", fit.max_grad) << "\n\n";
  text << parameter_table(fit) << '\n' << fixed_effects_table(table);

  std::ostringstream w;
  w << "id,w_hat\n";
  for (Index i = 0; i < fit.a.size(); ++i) w << in.ids[static_cast<std::size_t>(i)] << ',' << full(fit.a(i)) << '\n';

  const fs::path dir = out_dir(opts, cfg);
  write_file(dir / "fit.json", artifact.dump(2) + "\n");
  write_file(dir / "fit.txt", text.str());
  write_file(dir / "w_hat.csv", w.str());
  out << text.str();
  if (fit.status != optimizer::FitStatus::converged) {
    err << "warning: search stopped at the evaluation limit (" << fit.evaluations << ")\n";
    return convergence_error;
  }
  return ok;
}

int cmd_predict(const Options& opts, std::ostream& out, std::ostream&) {
  const auto cfg = load_config(opts.config);
  const auto mode = effective_mode(opts, cfg);
  const double level = effective_level(opts, cfg);
  const fs::path dir = out_dir(opts, cfg);
  const fs::path artifact_path = opts.artifact.value_or(dir / "fit.json");
  const json artifact = fit_artifact_check(artifact_path);
  const auto in = build_inputs(cfg);
  if (artifact.value("config_hash", "") != config_hash(cfg, mode)) {
    throw ConfigError(artifact_path.string() +
                      " does not match the current config, mode or data files; rerun fit");
  }
  Vector params(static_cast<Index>(artifact["parameters"].size()));
  for (std::size_t i = 0; i < artifact["parameters"].size(); ++i) {
    params(static_cast<Index>(i)) = artifact["parameters"][i]["value"].get<double>();
  }
  const auto fit = optimizer::evaluate_at(in.data, cfg.family, in.x, in.spec, params, mode);
  const auto pred = build_prediction(cfg, in);
  const auto r = inference::predict(fit, pred.x_u, pred.meta);
  const auto iv = inference::intervals(r, level);
  const Vector se = r.se();

  std::ostringstream csv;
  csv << "id,u_hat,se,lower,upper\n";
  for (Index i = 0; i < r.u_hat.size(); ++i) {
    double u = r.u_hat(i), lo = iv.lower(i), hi = iv.upper(i);
    if (opts.exp) {
      u = std::exp(u);
      lo = std::exp(lo);
      hi = std::exp(hi);
    }
    csv << pred.ids[static_cast<std::size_t>(i)] << ',' << full(u) << ',' << full(se(i)) << ',' << full(lo) << ','
        << full(hi) << '\n';
  }
  write_file(dir / "predictions.csv", csv.str());
  out << "wrote " << r.u_hat.size() << " predictions at level " << g6(level) << (opts.exp ? " (exponentiated)" : "")
      << " to " << (dir / "predictions.csv").string() << '\n';
  return ok;
}

int cmd_simulate(const Options& opts, std::ostream& out, std::ostream& err) {
  const auto cfg = load_config(opts.config);
  if (!cfg.experiment) throw ConfigError(opts.config.string() + ": no experiment section");
  auto e = *cfg.experiment;
  if (opts.seed) e.seed = *opts.seed;
  if (opts.level) e.level = effective_level(opts, cfg);
  if (opts.mode) e.mode = effective_mode(opts, cfg);
  e.threads = opts.threads;
  if (opts.verbose) {
    err << "simulate: " << e.n_replicates << " replicates of " << datamodels::to_string(e.family.kind)
        << " data, n_obs " << e.n_obs << ", seed " << e.seed << '\n';
  }
  const auto report = simulate::run_experiment(e);
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx",
                static_cast<unsigned long long>(fnv1a(cfg.canonical_experiment + "|" + std::to_string(e.seed) + "|" +
                                                      full(e.level) + "|" + mode_name(e.mode))));
  const fs::path dir = out_dir(opts, cfg);
  const std::string table = simulate::report_table(report);
  write_file(dir / "report.csv", simulate::report_csv(report));
  write_file(dir / "report.txt", table);
  write_file(dir / "report.json", report_json(report, e, hash));
  out << table;
  if (report.failures > 0) {
    err << "warning: " << report.failures << " of " << report.replicates << " replicates failed\n";
    if (opts.verbose) {
      for (const auto& m : report.failure_messages) err << "  " << m << '\n';
    }
  }
  return ok;
}

int cmd_compare(const Options& opts, std::ostream& out, std::ostream&) {
  if (opts.artifacts.empty()) throw ConfigError("compare: give at least one fit artifact");
  std::vector<optimizer::FitResult> fits;
  std::vector<std::string> names;
  for (const auto& path : opts.artifacts) {
    const json j = fit_artifact_check(path);
    optimizer::FitResult f;
    try {
      f.family.kind = datamodels::family_from_string(j.at("family").get<std::string>());
      f.mode = j.at("mode").get<std::string>() == "ml" ? laplace::Mode::ml : laplace::Mode::reml;
      f.data.y = vector_from(j.at("data").at("response"));
      if (j.at("data").contains("trials")) f.data.trials = vector_from(j.at("data").at("trials"));
      const auto& design = j.at("design");
      f.x = matrix_from(design.at("rows"), static_cast<Index>(design.at("columns").size()));
      Index theta = 0;
      for (const auto& p : j.at("parameters")) theta += p.at("kind").get<std::string>() == "dispersion" ? 0 : 1;
      f.theta_hat = Vector::Zero(theta);
      f.minus2ll = j.at("minus2ll").get<double>();
    } catch (const json::exception& e) {
      throw ConfigError(path.string() + ": malformed fit artifact: " + e.what());
    } catch (const hglmm::Error& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
    fits.push_back(std::move(f));
    names.push_back(path.generic_string());
  }
  std::vector<optimizer::RankedFit> ranking;
  try {
    ranking = optimizer::compare(fits);
  } catch (const hglmm::DomainError& e) {
    throw ConfigError(e.what());
  }
  const std::string table = ranking_table(ranking, names);
  out << table;
  if (opts.out_dir) {
    json rows = json::array();
    for (std::size_t r = 0; r < ranking.size(); ++r) {
      rows.push_back({{"rank", r + 1},
                      {"artifact", names[ranking[r].index]},
                      {"minus2ll", ranking[r].minus2ll},
                      {"aic", ranking[r].aic},
                      {"param_count", ranking[r].param_count},
                      {"mode", mode_name(ranking[r].mode)}});
    }
    const json j = {{"schema_version", kSchemaVersion}, {"command", "compare"}, {"ranking", rows}};
    write_file(*opts.out_dir / "compare.json", j.dump(2) + "\n");
    write_file(*opts.out_dir / "compare.txt", table);
  }
  return ok;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Laplace-approximation fitting of hierarchical GLMMs with patterned covariance", "hglmm"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  std::string mode;
  double level = 0.0;
  std::uint64_t seed = 0;
  std::string out_dir_arg;
  std::string artifact;
  std::vector<std::string> artifacts;
  auto* config_opt = app.add_option("--config", o.config, "JSON configuration file");
  auto* mode_opt = app.add_option("--mode", mode, "Estimation mode")->check(CLI::IsMember({"ml", "reml"}));
  auto* level_opt = app.add_option("--level", level, "Interval coverage in (0, 1)");
  auto* seed_opt = app.add_option("--seed", seed, "Random seed (simulate) recorded in artifacts");
  app.add_option("--threads", o.threads, "Worker threads for replicate-level parallelism")
      ->check(CLI::PositiveNumber);
  app.add_flag("--exp", o.exp, "Exponentiate predictions and interval bounds");
  auto* out_opt = app.add_option("--out-dir", out_dir_arg, "Directory for output artifacts");
  app.add_flag("--verbose,-v", o.verbose, "Progress on stderr");

  auto* fit = app.add_subcommand("fit", "Fit a model; writes fit.json, fit.txt and w_hat.csv");
  auto* predict = app.add_subcommand("predict", "Predict latent values; writes predictions.csv");
  auto* artifact_opt = predict->add_option("--artifact", artifact, "Fit artifact (default <out-dir>/fit.json)");
  auto* simulate = app.add_subcommand("simulate", "Run a simulation experiment; writes report.{csv,txt,json}");
  auto* compare = app.add_subcommand("compare", "Rank fit artifacts by AIC");
  compare->add_option("artifacts", artifacts, "Fit artifacts (fit.json)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? ok : config_error;
  }
  if (*mode_opt) o.mode = mode;
  if (*level_opt) o.level = level;
  if (*seed_opt) o.seed = seed;
  if (*out_opt) o.out_dir = fs::path(out_dir_arg);
  if (*artifact_opt) o.artifact = fs::path(artifact);
  for (const auto& a : artifacts) o.artifacts.emplace_back(a);

  try {
    if (!compare->parsed() && !*config_opt) throw ConfigError("--config is required");
    if (fit->parsed()) return cmd_fit(o, out, err);
    if (predict->parsed()) return cmd_predict(o, out, err);
    if (simulate->parsed()) return cmd_simulate(o, out, err);
    return cmd_compare(o, out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return config_error;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return data_error;
  } catch (const hglmm::ConvergenceError& e) {
    err << "convergence failure: " << e.what() << '\n';
    return convergence_error;
  } catch (const hglmm::NumericalError& e) {
    err << "convergence failure: " << e.what() << '\n';
    return convergence_error;
  } catch (const hglmm::Error& e) {
    err << "data error: " << e.what() << '\n';
    return data_error;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return failure;
  }
}

}  // namespace hglmm::cli
