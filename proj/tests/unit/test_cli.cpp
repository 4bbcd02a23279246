#include "commands.hpp"
#include "csv_table.hpp"
#include "errors.hpp"
#include "model_config.hpp"

#include "hglmm/inference.hpp"
#include "hglmm/optimizer.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using namespace hglmm;
using nlohmann::json;

namespace {

const fs::path kFixtures = HGLMM_FIXTURE_DIR;

struct RunResult {
  int code;
  std::string out;
  std::string err;
};

RunResult run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "hglmm");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("hglmm_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  os << text;
}

// Copies a fixture directory so a test can edit the inputs.
fs::path copy_fixture(const std::string& name, const std::string& test) {
  const fs::path dir = scratch(test);
  fs::copy(kFixtures / name, dir / name, fs::copy_options::recursive);
  return dir / name;
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

std::vector<std::string> words(const std::string& line) {
  std::istringstream is(line);
  std::vector<std::string> w;
  std::string s;
  while (is >> s) w.push_back(s);
  return w;
}

// Minimal fit artifact for compare.
json stub_artifact(double minus2ll, const std::string& mode, int columns) {
  json rows = json::array();
  for (int i = 0; i < 4; ++i) {
    json r = json::array();
    for (int c = 0; c < columns; ++c) r.push_back(c == 0 ? 1.0 : static_cast<double>(i * c));
    rows.push_back(r);
  }
  std::vector<std::string> names{"Intercept", "x", "z"};
  names.resize(static_cast<std::size_t>(columns));
  return {{"schema_version", cli::kSchemaVersion},
          {"command", "fit"},
          {"family", "poisson"},
          {"mode", mode},
          {"minus2ll", minus2ll},
          {"parameters", json::array({{{"name", "c0.sigma2"}, {"kind", "variance"}, {"value", 1.0}},
                                      {{"name", "c0.range"}, {"kind", "range"}, {"value", 1.0}}})},
          {"data", {{"response", {1, 2, 3, 4}}}},
          {"design", {{"columns", names}, {"rows", rows}}}};
}

}  // namespace

TEST(CsvTable, ParsesAndValidates) {
  const auto t = cli::CsvTable::parse("a, b ,c\r\n1,2.5,x\n\n-3,4e-2,y\n", "mem");
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.header()[1], "b");
  EXPECT_EQ(t.numbers("b"), (std::vector<double>{2.5, 0.04}));
  EXPECT_EQ(t.integers("a"), (std::vector<int>{1, -3}));
  EXPECT_EQ(t.text("c"), (std::vector<std::string>{"x", "y"}));
  EXPECT_THROW(t.numbers("c"), cli::DataError);
  EXPECT_THROW(t.numbers("q"), cli::DataError);
  EXPECT_THROW(t.integers("b"), cli::DataError);
  EXPECT_THROW(cli::CsvTable::parse("a,b\n1,\n", "mem"), cli::DataError);
  EXPECT_THROW(cli::CsvTable::parse("a,b\n1,NA\n", "mem"), cli::DataError);
  EXPECT_THROW(cli::CsvTable::parse("a,b\n1\n", "mem"), cli::DataError);
  EXPECT_THROW(cli::CsvTable::parse("a,a\n1,2\n", "mem"), cli::DataError);
  EXPECT_THROW(cli::CsvTable::parse("a\n\"1\"\n", "mem"), cli::DataError);
}

TEST(Config, DesignTerms) {
  const auto t = cli::CsvTable::parse("x,z\n2,3\n-1,5\n", "mem");
  EXPECT_EQ(cli::design_term(t, "x"), (Vector(2) << 2, -1).finished());
  EXPECT_EQ(cli::design_term(t, "x:z"), (Vector(2) << 6, -5).finished());
  EXPECT_EQ(cli::design_term(t, "x^2"), (Vector(2) << 4, 1).finished());
  EXPECT_EQ(cli::design_term(t, "x^2:z"), (Vector(2) << 12, 5).finished());
  EXPECT_THROW(cli::design_term(t, "x^0"), cli::ConfigError);
  EXPECT_THROW(cli::design_term(t, "x^a"), cli::ConfigError);
  EXPECT_THROW(cli::design_term(t, "w"), cli::ConfigError);
}

TEST(Config, RejectsUnknownKeysWithPath) {
  const std::string base = R"({"data": "d.csv", "response": "y", "family": "poisson", "covariance": [)";
  try {
    cli::parse_config(base + R"({"type": "nugget", "nuget": 1}]})", ".", "mem");
    FAIL();
  } catch (const cli::ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("covariance[0].nuget"), std::string::npos);
  }
  EXPECT_THROW(cli::parse_config(base + R"({"type": "nugget"}], "colour": 1})", ".", "mem"), cli::ConfigError);
  EXPECT_THROW(cli::parse_config(base + R"({"type": "matern"}]})", ".", "mem"), cli::ConfigError);
  EXPECT_THROW(cli::parse_config(base + R"({"type": "nugget"}], "mode": "mle"})", ".", "mem"), cli::ConfigError);
  EXPECT_THROW(cli::parse_config(base + R"({"type": "exponential", "coords": ["a"]}]})", ".", "mem"),
               cli::ConfigError);
  EXPECT_THROW(cli::parse_config(R"({"experiment": {"n_replicates": 0}})", ".", "mem"), cli::ConfigError);
  EXPECT_THROW(cli::parse_config(R"({"experiment": {"nobs": 10}})", ".", "mem"), cli::ConfigError);
  EXPECT_THROW(cli::parse_config(R"({"level": 0.9})", ".", "mem"), cli::ConfigError);
}

TEST(Config, ParseErrorsCarryPosition) {
  try {
    cli::parse_config("{\n  \"data\": \"x.csv\",\n  \"response\" \"y\"\n}", ".", "cfg.json");
    FAIL();
  } catch (const cli::ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(Config, ParsesEveryComponentKind) {
  const auto c = cli::load_config(kFixtures / "panel" / "panel.json");
  ASSERT_EQ(c.covariance.size(), 2u);
  EXPECT_EQ(c.covariance[0].type, "random_intercept");
  EXPECT_EQ(c.covariance[1].group, "plot");
  EXPECT_EQ(c.family.kind, datamodels::FamilyKind::gamma);
  EXPECT_EQ(c.family.phi, 2.0);
  EXPECT_EQ(c.p_values, "t");
  const auto t = cli::load_config(kFixtures / "turnout" / "turnout.json");
  EXPECT_EQ(t.covariance[0].type, "sar");
  EXPECT_EQ(t.covariance[0].edges, kFixtures / "turnout" / "edges.csv");
  const auto in = cli::build_inputs(t);
  EXPECT_EQ(in.x.cols(), 4);
  EXPECT_EQ(in.x_names.back(), "income:urban");
  EXPECT_EQ(in.spec.labels()[0], "space");
}

TEST(Config, HashFollowsDataAndMode) {
  const fs::path dir = copy_fixture("geo", "hash");
  const auto cfg = cli::load_config(dir / "geo.json");
  const auto h = cli::config_hash(cfg, laplace::Mode::reml);
  EXPECT_EQ(h.size(), 16u);
  EXPECT_EQ(h, cli::config_hash(cfg, laplace::Mode::reml));
  EXPECT_NE(h, cli::config_hash(cfg, laplace::Mode::ml));
  std::string data = slurp(dir / "sites.csv");
  data[data.size() - 2] = data[data.size() - 2] == '1' ? '2' : '1';
  spit(dir / "sites.csv", data);
  EXPECT_NE(h, cli::config_hash(cfg, laplace::Mode::reml));
  EXPECT_EQ(cli::fnv1a(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(cli::fnv1a("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Fit, TurnoutTableColumns) {
  const fs::path out = scratch("turnout");
  const auto r = run_cli({"fit", "--config", (kFixtures / "turnout" / "turnout.json").string(), "--out-dir", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream is(r.out);
  std::string line;
  bool found = false;
  while (std::getline(is, line)) {
    if (line.rfind("Effect", 0) == 0) {
      EXPECT_EQ(words(line), (std::vector<std::string>{"Effect", "Est.", "s.e._u", "s.e._c", "t-val.", "p-val."}));
      found = true;
    }
  }
  EXPECT_TRUE(found);
  const json j = json::parse(slurp(out / "fit.json"));
  EXPECT_EQ(j["schema_version"], cli::kSchemaVersion);
  EXPECT_EQ(j["family"], "binomial");
  EXPECT_EQ(j["fixed_effects"]["rows"].size(), 4u);
  EXPECT_EQ(j["status"], "converged");
  EXPECT_LT(j["max_grad"].get<double>(), 1e-8);
}

TEST(Fit, MissingResponseColumnIsConfigError) {
  const fs::path dir = copy_fixture("geo", "missing_response");
  json cfg = json::parse(slurp(dir / "geo.json"));
  cfg["response"] = "cnt";
  spit(dir / "geo.json", cfg.dump());
  const auto r = run_cli({"fit", "--config", (dir / "geo.json").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("response"), std::string::npos);
  EXPECT_NE(r.err.find("cnt"), std::string::npos);
}

TEST(Fit, BadResponseValuesAreDataErrors) {
  const fs::path dir = copy_fixture("geo", "negative_count");
  std::string data = slurp(dir / "sites.csv");
  const auto pos = data.find('\n', data.find('\n') + 1);
  data.insert(pos, "-");
  const auto row_end = data.rfind(',', pos);
  data.erase(pos, 1);
  data.insert(row_end + 1, "-");
  spit(dir / "sites.csv", data);
  const auto r = run_cli({"fit", "--config", (dir / "geo.json").string()});
  EXPECT_EQ(r.code, 3) << r.err;
}

TEST(Fit, UnknownBoundNameIsConfigError) {
  const fs::path dir = copy_fixture("geo", "bad_bound");
  json cfg = json::parse(slurp(dir / "geo.json"));
  cfg["bounds"] = {{"geo.sill", {0.1, 1.0}}};
  spit(dir / "geo.json", cfg.dump());
  const auto r = run_cli({"fit", "--config", (dir / "geo.json").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("geo.range"), std::string::npos);
}

TEST(Fit, EvaluationLimitExitsWithConvergenceCode) {
  const fs::path dir = copy_fixture("geo", "eval_limit");
  json cfg = json::parse(slurp(dir / "geo.json"));
  cfg["max_evals"] = 5;
  spit(dir / "geo.json", cfg.dump());
  const auto r = run_cli({"fit", "--config", (dir / "geo.json").string(), "--out-dir", (dir / "out").string()});
  EXPECT_EQ(r.code, 4);
  EXPECT_EQ(json::parse(slurp(dir / "out" / "fit.json"))["status"], "evaluation_limit");
}

TEST(Fit, RepeatedRunsAreByteIdentical) {
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  const auto cfg = (kFixtures / "geo" / "geo.json").string();
  ASSERT_EQ(run_cli({"fit", "--config", cfg, "--out-dir", a.string(), "--seed", "3"}).code, 0);
  ASSERT_EQ(run_cli({"fit", "--config", cfg, "--out-dir", b.string(), "--seed", "3"}).code, 0);
  for (const char* f : {"fit.json", "fit.txt", "w_hat.csv"}) EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
}

TEST(Fit, MatchesGoldenTable) {
  const fs::path out = scratch("golden");
  ASSERT_EQ(run_cli({"fit", "--config", (kFixtures / "geo" / "geo.json").string(), "--out-dir", out.string()}).code, 0);
  EXPECT_EQ(slurp(out / "fit.txt"), slurp(kFixtures / "golden" / "geo_fit.txt"));
}

TEST(Fit, TableValuesRoundTripThroughJson) {
  const fs::path out = scratch("roundtrip");
  ASSERT_EQ(run_cli({"fit", "--config", (kFixtures / "turnout" / "turnout.json").string(), "--out-dir", out.string()}).code, 0);
  const json j = json::parse(slurp(out / "fit.json"));
  std::istringstream is(slurp(out / "fit.txt"));
  std::string line;
  while (std::getline(is, line) && line.rfind("Effect", 0) != 0) {
  }
  const char* keys[] = {"estimate", "se_u", "se_c", "t_value", "p_value"};
  for (const auto& row : j["fixed_effects"]["rows"]) {
    ASSERT_TRUE(std::getline(is, line));
    const auto w = words(line);
    ASSERT_EQ(w.size(), 6u);
    EXPECT_EQ(w[0], row["effect"]);
    for (int k = 0; k < 5; ++k) {
      const double printed = std::stod(w[static_cast<std::size_t>(k) + 1]);
      const double stored = row[keys[k]].get<double>();
      EXPECT_LE(std::abs(printed - stored), 5e-6 * std::abs(stored)) << keys[k];
    }
  }
}

TEST(Predict, MatchesLibraryPrediction) {
  const fs::path out = scratch("predict_lib");
  const fs::path cfg_path = kFixtures / "geo" / "geo.json";
  ASSERT_EQ(run_cli({"fit", "--config", cfg_path.string(), "--out-dir", out.string()}).code, 0);
  const auto r = run_cli({"predict", "--config", cfg_path.string(), "--out-dir", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = csv_rows(slurp(out / "predictions.csv"));
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"id", "u_hat", "se", "lower", "upper"}));

  const auto cfg = cli::load_config(cfg_path);
  const auto in = cli::build_inputs(cfg);
  const auto fit = optimizer::fit(in.data, cfg.family, in.x, in.spec);
  const auto pred = cli::build_prediction(cfg, in);
  const auto lib = inference::predict(fit, pred.x_u, pred.meta);
  const auto iv = inference::intervals(lib, 0.9);
  for (Index i = 0; i < 3; ++i) {
    const auto& row = rows[static_cast<std::size_t>(i) + 1];
    EXPECT_EQ(row[0], pred.ids[static_cast<std::size_t>(i)]);
    EXPECT_NEAR(std::stod(row[1]), lib.u_hat(i), 1e-12);
    EXPECT_NEAR(std::stod(row[2]), lib.se()(i), 1e-12);
    EXPECT_NEAR(std::stod(row[3]), iv.lower(i), 1e-12);
    EXPECT_NEAR(std::stod(row[4]), iv.upper(i), 1e-12);
  }
}

TEST(Predict, IndependentSitesGiveFixedEffectPrediction) {
  const fs::path out = scratch("predict_nugget");
  const fs::path cfg = kFixtures / "geo" / "geo_nugget.json";
  ASSERT_EQ(run_cli({"fit", "--config", cfg.string(), "--out-dir", out.string()}).code, 0);
  ASSERT_EQ(run_cli({"predict", "--config", cfg.string(), "--out-dir", out.string()}).code, 0);
  const json j = json::parse(slurp(out / "fit.json"));
  const double b0 = j["fixed_effects"]["rows"][0]["estimate"];
  const double b1 = j["fixed_effects"]["rows"][1]["estimate"];
  const auto rows = csv_rows(slurp(out / "predictions.csv"));
  const auto pred = csv_rows(slurp(kFixtures / "geo" / "pred.csv"));
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_NEAR(std::stod(rows[i][1]), b0 + b1 * std::stod(pred[i][3]), 1e-12);
  }
}

TEST(Predict, ExpFlagTransformsPointAndBounds) {
  const fs::path out = scratch("predict_exp");
  const auto cfg = (kFixtures / "turnout" / "turnout.json").string();
  ASSERT_EQ(run_cli({"fit", "--config", cfg, "--out-dir", out.string()}).code, 0);
  ASSERT_EQ(run_cli({"predict", "--config", cfg, "--out-dir", out.string()}).code, 0);
  const auto latent = csv_rows(slurp(out / "predictions.csv"));
  ASSERT_EQ(run_cli({"predict", "--config", cfg, "--out-dir", out.string(), "--exp"}).code, 0);
  const auto shown = csv_rows(slurp(out / "predictions.csv"));
  ASSERT_EQ(latent.size(), shown.size());
  for (std::size_t i = 1; i < latent.size(); ++i) {
    for (std::size_t k : {1u, 3u, 4u}) {
      EXPECT_NEAR(std::stod(shown[i][k]), std::exp(std::stod(latent[i][k])), 1e-13 * std::stod(shown[i][k]));
    }
    EXPECT_EQ(shown[i][2], latent[i][2]);
    EXPECT_LE(std::stod(shown[i][3]), std::stod(shown[i][1]));
    EXPECT_LE(std::stod(shown[i][1]), std::stod(shown[i][4]));
  }
}

TEST(Predict, LevelFlagWidensIntervals) {
  const fs::path out = scratch("predict_level");
  const auto cfg = (kFixtures / "panel" / "panel.json").string();
  ASSERT_EQ(run_cli({"fit", "--config", cfg, "--out-dir", out.string()}).code, 0);
  ASSERT_EQ(run_cli({"predict", "--config", cfg, "--out-dir", out.string(), "--level", "0.5"}).code, 0);
  const auto narrow = csv_rows(slurp(out / "predictions.csv"));
  ASSERT_EQ(run_cli({"predict", "--config", cfg, "--out-dir", out.string(), "--level", "0.99"}).code, 0);
  const auto wide = csv_rows(slurp(out / "predictions.csv"));
  ASSERT_EQ(narrow.size(), 7u);
  for (std::size_t i = 1; i < narrow.size(); ++i) {
    const double hw50 = std::stod(narrow[i][4]) - std::stod(narrow[i][1]);
    const double hw99 = std::stod(wide[i][4]) - std::stod(wide[i][1]);
    EXPECT_NEAR(hw99 / hw50, inference::z_multiplier(0.99) / inference::z_multiplier(0.5), 1e-9);
  }
}

TEST(Predict, StaleArtifactIsRejected) {
  const fs::path dir = copy_fixture("geo", "stale");
  ASSERT_EQ(run_cli({"fit", "--config", (dir / "geo.json").string(), "--out-dir", (dir / "out").string()}).code, 0);
  spit(dir / "sites.csv", slurp(dir / "sites.csv") + "s99,0.5,0.5,0.1,3\n");
  const auto r = run_cli({"predict", "--config", (dir / "geo.json").string(), "--out-dir", (dir / "out").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("rerun fit"), std::string::npos);
  const auto m = run_cli({"predict", "--config", (kFixtures / "geo" / "geo.json").string(), "--artifact",
                          (dir / "missing.json").string()});
  EXPECT_EQ(m.code, 2);
}

TEST(Predict, UnseenGroupIsDataError) {
  const fs::path dir = copy_fixture("panel", "unseen_group");
  ASSERT_EQ(run_cli({"fit", "--config", (dir / "panel.json").string(), "--out-dir", (dir / "out").string()}).code, 0);
  spit(dir / "next_year.csv", "plot,year,dose\n99,9,0.5\n");
  const auto r = run_cli({"predict", "--config", (dir / "panel.json").string(), "--out-dir", (dir / "out").string()});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("99"), std::string::npos);
}

TEST(Simulate, ReportStructureAndDeterminism) {
  const fs::path a = scratch("sim_a"), b = scratch("sim_b");
  const auto cfg = (kFixtures / "experiment.json").string();
  const auto r = run_cli({"simulate", "--config", cfg, "--out-dir", a.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  ASSERT_EQ(run_cli({"simulate", "--config", cfg, "--out-dir", b.string(), "--threads", "2"}).code, 0);
  for (const char* f : {"report.csv", "report.txt", "report.json"}) EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  const auto rows = csv_rows(slurp(a / "report.csv"));
  ASSERT_EQ(rows.size(), 6u);
  const char* names[] = {"beta0", "beta1", "beta2", "beta3", "u"};
  for (std::size_t k = 0; k < 5; ++k) EXPECT_EQ(rows[k + 1][0], names[k]);
  const auto c = scratch("sim_c");
  ASSERT_EQ(run_cli({"simulate", "--config", cfg, "--out-dir", c.string(), "--seed", "8"}).code, 0);
  EXPECT_NE(slurp(a / "report.csv"), slurp(c / "report.csv"));
}

TEST(Simulate, SingleReplicateCoverageIsZeroOrOne) {
  const fs::path dir = scratch("sim_one");
  spit(dir / "one.json", R"({"experiment": {"n_obs": 30, "pred_grid": 2, "n_replicates": 1, "seed": 5}})");
  ASSERT_EQ(run_cli({"simulate", "--config", (dir / "one.json").string(), "--out-dir", dir.string()}).code, 0);
  const json j = json::parse(slurp(dir / "report.json"));
  for (const auto& row : j["rows"]) {
    if (row["effect"] == "u") continue;
    const double c = row["coverage_corrected"];
    EXPECT_TRUE(c == 0.0 || c == 1.0);
  }
}

TEST(Compare, LowerMinusTwoLoglikRanksFirst) {
  const fs::path dir = scratch("compare");
  spit(dir / "a.json", stub_artifact(298.14, "reml", 2).dump());
  spit(dir / "b.json", stub_artifact(279.15, "reml", 2).dump());
  const auto r = run_cli({"compare", (dir / "a.json").string(), (dir / "b.json").string(), "--out-dir", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = json::parse(slurp(dir / "compare.json"));
  EXPECT_EQ(j["ranking"][0]["artifact"], (dir / "b.json").generic_string());
  EXPECT_EQ(j["ranking"][0]["minus2ll"], 279.15);
  EXPECT_EQ(j["ranking"][1]["artifact"], (dir / "a.json").generic_string());
}

TEST(Compare, SingleArtifactSingleRow) {
  const fs::path dir = scratch("compare_one");
  spit(dir / "a.json", stub_artifact(10.0, "ml", 2).dump());
  const auto r = run_cli({"compare", (dir / "a.json").string()});
  ASSERT_EQ(r.code, 0);
  std::istringstream is(r.out);
  std::string line;
  int lines = 0;
  while (std::getline(is, line)) ++lines;
  EXPECT_EQ(lines, 2);
}

TEST(Compare, RemlWithDifferentDesignsIsRefused) {
  const fs::path dir = scratch("compare_x");
  spit(dir / "a.json", stub_artifact(10.0, "reml", 2).dump());
  spit(dir / "b.json", stub_artifact(9.0, "reml", 3).dump());
  const auto r = run_cli({"compare", (dir / "a.json").string(), (dir / "b.json").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("fixed effects"), std::string::npos);
  spit(dir / "c.json", R"({"schema_version": 99})");
  EXPECT_EQ(run_cli({"compare", (dir / "c.json").string()}).code, 2);
}

TEST(Compare, RealFitsUnderMl) {
  const fs::path a = scratch("cmp_ml_a"), b = scratch("cmp_ml_b");
  ASSERT_EQ(run_cli({"fit", "--config", (kFixtures / "geo" / "geo.json").string(), "--mode", "ml", "--out-dir", a.string()}).code, 0);
  ASSERT_EQ(run_cli({"fit", "--config", (kFixtures / "geo" / "geo_intercept.json").string(), "--mode", "ml", "--out-dir", b.string()}).code, 0);
  const auto r = run_cli({"compare", (a / "fit.json").string(), (b / "fit.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("ML"), std::string::npos);
}

TEST(Usage, FlagAndSubcommandErrors) {
  EXPECT_EQ(run_cli({}).code, 2);
  EXPECT_EQ(run_cli({"fit"}).code, 2);
  EXPECT_EQ(run_cli({"fit", "--config", "x.json", "--mode", "mle"}).code, 2);
  EXPECT_EQ(run_cli({"fit", "--config", "/nonexistent/x.json"}).code, 2);
  EXPECT_EQ(run_cli({"--help"}).code, 0);
}
