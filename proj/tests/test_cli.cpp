#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "vaecompare/cli.hpp"

using namespace vaecompare;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code;
  std::string out;
  std::string err;
};

RunResult run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "vaecompare");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("vaecompare_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

const std::vector<std::string> kQuick{"--refits",     "1", "--samples-per-refit", "10", "--latent-dim", "2",
                                      "--hidden-layers", "1", "--hidden-width",   "8",  "--max-epochs", "8",
                                      "--dropout",    "0"};

std::vector<std::string> with_quick(std::vector<std::string> args) {
  args.insert(args.end(), kQuick.begin(), kQuick.end());
  return args;
}

nlohmann::json read_json(const std::string& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

// Subset of JSON Schema used by the report schema: type, enum, required,
// properties, items, local $ref.
void validate(const nlohmann::json& v, const nlohmann::json& schema, const nlohmann::json& root,
              const std::string& where, std::vector<std::string>& errors) {
  if (schema.contains("$ref")) {
    const std::string ref = schema["$ref"];
    validate(v, root.at(nlohmann::json::json_pointer(ref.substr(1))), root, where, errors);
    return;
  }
  if (schema.contains("type")) {
    const std::string t = schema["type"];
    const bool ok = (t == "object" && v.is_object()) || (t == "array" && v.is_array()) ||
                    (t == "string" && v.is_string()) || (t == "boolean" && v.is_boolean()) ||
                    (t == "integer" && v.is_number_integer()) || (t == "number" && v.is_number());
    if (!ok) {
      errors.push_back(where + ": expected " + t);
      return;
    }
  }
  if (schema.contains("enum") && std::find(schema["enum"].begin(), schema["enum"].end(), v) == schema["enum"].end())
    errors.push_back(where + ": value not in enum");
  if (schema.contains("required"))
    for (const auto& k : schema["required"])
      if (!v.contains(k.get<std::string>())) errors.push_back(where + ": missing " + k.get<std::string>());
  if (schema.contains("properties"))
    for (const auto& [k, sub] : schema["properties"].items())
      if (v.contains(k)) validate(v[k], sub, root, where + "." + k, errors);
  if (schema.contains("items") && v.is_array())
    for (std::size_t i = 0; i < v.size(); ++i)
      validate(v[i], schema["items"], root, where + "[" + std::to_string(i) + "]", errors);
}

std::vector<std::string> schema_errors(const nlohmann::json& report) {
  const nlohmann::json schema = read_json(VAECOMPARE_SCHEMA_PATH);
  std::vector<std::string> errors;
  validate(report, schema, schema, "report", errors);
  if (errors.empty()) {
    const std::string def = report["command"].get<std::string>() + "_results";
    validate(report["results"], schema["$defs"][def], schema, "results", errors);
  }
  return errors;
}

}  // namespace

TEST_F(CliTest, SimulateWritesCsvAndBin) {
  auto r = run_cli({"simulate", "--rows", "40", "--shift", "2", "--seed", "3", "--out", path("a.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const Matrix csv = load_dataset(path("a.csv"));
  EXPECT_EQ(csv.rows(), 40u);
  EXPECT_EQ(csv.cols(), 10u);
  EXPECT_EQ(csv, simulate_dataset({40, 2.0, 3}));
  const auto report = nlohmann::json::parse(r.out);
  EXPECT_EQ(report["command"], "simulate");
  EXPECT_EQ(report["results"]["rows"], 40);

  r = run_cli({"simulate", "--rows", "40", "--shift", "2", "--seed", "3", "--out", path("a.dat"), "--format", "bin"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(load_dataset(path("a.dat"), DatasetFormat::bin), csv);
}

TEST_F(CliTest, CompareTwoDatasetsReport) {
  ASSERT_EQ(run_cli({"simulate", "--rows", "60", "--seed", "1", "--out", path("a.csv")}).code, 0);
  ASSERT_EQ(run_cli({"simulate", "--rows", "60", "--seed", "2", "--shift", "1", "--out", path("b.bin")}).code, 0);
  const auto r = run_cli(with_quick({"compare", path("a.csv"), path("b.bin"), "--out", path("r.json")}));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = read_json(path("r.json"));
  EXPECT_EQ(j["schema_version"], 1);
  EXPECT_EQ(j["command"], "compare");
  EXPECT_EQ(j["results"]["samples"].size(), 10u);
  EXPECT_FALSE(j["results"]["self_comparison"].get<bool>());
  EXPECT_EQ(j["results"]["baselines"][0]["value"], 0.5);
  EXPECT_EQ(j["config"]["refits"], "1");
  EXPECT_TRUE(j.contains("timing"));
  EXPECT_EQ(j["seeds"]["refit_seeds"].size(), 2u);
}

TEST_F(CliTest, CompareSingleDatasetSplitsIt) {
  ASSERT_EQ(run_cli({"simulate", "--rows", "61", "--seed", "1", "--out", path("a.csv")}).code, 0);
  const auto r = run_cli(with_quick({"compare", path("a.csv")}));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_TRUE(j["results"]["self_comparison"].get<bool>());
  EXPECT_EQ(j["results"]["rows"][0], 30);
  EXPECT_EQ(j["results"]["rows"][1], 31);
  EXPECT_TRUE(j["seeds"].contains("split_seed"));
}

TEST_F(CliTest, HtestReport) {
  ASSERT_EQ(run_cli({"simulate", "--rows", "40", "--seed", "1", "--out", path("a.csv")}).code, 0);
  ASSERT_EQ(run_cli({"simulate", "--rows", "40", "--seed", "2", "--out", path("b.csv")}).code, 0);
  const auto r = run_cli(with_quick({"htest", path("a.csv"), path("b.csv"), "--permutations", "3"}));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  const auto& res = j["results"];
  EXPECT_EQ(res["statistics"].size(), 4u);
  EXPECT_EQ(res["permutations"], 3);
  const double p = res["p_value"];
  EXPECT_GE(p, 0.0);
  EXPECT_LE(p, 1.0);
  EXPECT_EQ(res["decision"], p < 0.05 ? "reject" : "retain");
  EXPECT_EQ(j["seeds"]["permutation_seeds"].size(), 3u);
}

TEST_F(CliTest, ConfigEchoReproducesRun) {
  ASSERT_EQ(run_cli({"simulate", "--rows", "40", "--seed", "1", "--out", path("a.csv")}).code, 0);
  ASSERT_EQ(run_cli({"simulate", "--rows", "40", "--seed", "2", "--out", path("b.csv")}).code, 0);
  const auto first =
      run_cli(with_quick({"htest", path("a.csv"), path("b.csv"), "--permutations", "2", "--seed", "99"}));
  ASSERT_EQ(first.code, 0) << first.err;
  const auto j1 = nlohmann::json::parse(first.out);

  std::ofstream cfg(path("echo.ini"));
  for (const auto& [k, v] : j1["config"].items()) cfg << k << '=' << v.get<std::string>() << '\n';
  cfg.close();
  const auto second = run_cli({"htest", path("a.csv"), path("b.csv"), "--config", path("echo.ini")});
  ASSERT_EQ(second.code, 0) << second.err;
  const auto j2 = nlohmann::json::parse(second.out);
  EXPECT_EQ(j2["config"], j1["config"]);
  EXPECT_EQ(j2["results"], j1["results"]);
  EXPECT_EQ(j2["seeds"], j1["seeds"]);
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(run_cli({}).code, 1);
  EXPECT_EQ(run_cli({"compare"}).code, 1);
  EXPECT_EQ(run_cli({"simulate", "--family", "poisson", "--out", path("x.csv")}).code, 1);
  EXPECT_EQ(run_cli({"simulate", "--bogus"}).code, 1);
  EXPECT_EQ(run_cli({"simulate"}).code, 1);
  EXPECT_EQ(run_cli(with_quick({"compare", path("missing.csv")})).code, 2);

  std::ofstream(path("ragged.csv")) << "1,2\n3\n";
  const auto r = run_cli(with_quick({"compare", path("ragged.csv")}));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("line 2"), std::string::npos);

  std::ofstream(path("tiny.csv")) << "1,2\n3,4\n5,6\n";
  EXPECT_EQ(run_cli(with_quick({"compare", path("tiny.csv")})).code, 2);
  EXPECT_EQ(run_cli(with_quick({"htest", path("tiny.csv"), path("tiny.csv")})).code, 2);

  ASSERT_EQ(run_cli({"simulate", "--rows", "20", "--out", path("g.csv")}).code, 0);
  EXPECT_EQ(run_cli(with_quick({"compare", path("g.csv"), "--family", "bernoulli"})).code, 2);
  EXPECT_EQ(run_cli(with_quick({"compare", path("g.csv"), "--alpha", "2"})).code, 0);
  EXPECT_EQ(run_cli(with_quick({"htest", path("g.csv"), path("g.csv"), "--alpha", "2"})).code, 1);
}

TEST_F(CliTest, ReportsMatchPublishedSchema) {
  std::vector<nlohmann::json> reports;
  auto r = run_cli({"simulate", "--rows", "40", "--seed", "1", "--out", path("a.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  reports.push_back(nlohmann::json::parse(r.out));
  ASSERT_EQ(run_cli({"simulate", "--rows", "40", "--seed", "2", "--out", path("b.csv")}).code, 0);
  for (auto args : {std::vector<std::string>{"compare", path("a.csv"), path("b.csv")},
                    std::vector<std::string>{"htest", path("a.csv"), path("b.csv"), "--permutations", "2"},
                    std::vector<std::string>{"ecdf", "--runs-per-shift", "2", "--permutations", "2", "--rows", "30",
                                             "--shifts", "0", "2"}}) {
    r = run_cli(with_quick(args));
    ASSERT_EQ(r.code, 0) << r.err;
    reports.push_back(nlohmann::json::parse(r.out));
  }
  for (const auto& rep : reports) {
    const auto errors = schema_errors(rep);
    EXPECT_TRUE(errors.empty()) << rep["command"] << ": " << (errors.empty() ? "" : errors.front());
  }
  nlohmann::json broken = reports[1];
  broken["results"].erase("summary");
  broken["schema_version"] = 2;
  EXPECT_EQ(schema_errors(broken).size(), 1u);
}

TEST_F(CliTest, HelpExitsZero) {
  const auto r = run_cli({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("htest"), std::string::npos);
}
