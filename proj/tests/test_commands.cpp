#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "bregman_market/commands.hpp"

namespace bm = bregman_market;
namespace fs = std::filesystem;
using bm::Json;

namespace {

bm::Scenario load(const std::string& name) {
  return bm::load_scenario(std::string(BREGMAN_MARKET_SCENARIO_DIR) + "/" + name + ".json");
}

struct CommandRun {
  int code = -1;
  std::string out;
  std::vector<std::string> warnings;
  std::vector<std::string> errors;
};

template <typename Command>
CommandRun run(Command cmd, const bm::Scenario& s, const bm::CommandOptions& opt = {}) {
  CommandRun r;
  std::ostringstream out;
  bm::CommandIo io{out, [&](const std::string& m) { r.warnings.push_back(m); },
                   [&](const std::string& m) { r.errors.push_back(m); }};
  r.code = cmd(s, opt, io);
  r.out = out.str();
  return r;
}

std::vector<Json> json_lines(const std::string& text) {
  std::vector<Json> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) out.push_back(Json::parse(line));
  return out;
}

double at(const Json& j, std::size_t i) { return j.at(i).get<double>(); }

// Numbers agree to 1e-9 (absolute or relative); everything else must match.
bool json_close(const Json& a, const Json& b) {
  if (a.is_number() && b.is_number()) {
    const double x = a.get<double>(), y = b.get<double>();
    return std::abs(x - y) <= 1e-9 * std::max(1.0, std::abs(y));
  }
  if (a.type() != b.type()) return false;
  if (a.is_array()) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (!json_close(a[i], b[i])) return false;
    return true;
  }
  if (a.is_object()) {
    if (a.size() != b.size()) return false;
    for (auto it = a.begin(), jt = b.begin(); it != a.end(); ++it, ++jt)
      if (it.key() != jt.key() || !json_close(it.value(), jt.value())) return false;
    return true;
  }
  return a == b;
}

// Accepts a single document or JSON lines.
std::vector<Json> documents(const std::string& text) {
  if (text.empty()) return {};
  if (text.front() == '{' && text.find("\n{") == std::string::npos) return {Json::parse(text)};
  return json_lines(text);
}

bm::CommandOptions json_opt() {
  bm::CommandOptions o;
  o.json = true;
  return o;
}

TEST(SolveCommand, SquareFirstTrader) {
  bm::CommandOptions opt;
  opt.budgets = std::vector<double>{0.07, 0.32};
  const auto r = run(bm::run_solve, load("e1_square"), opt);
  ASSERT_EQ(r.code, 0);
  const auto rows = json_lines(r.out);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_NEAR(at(rows[0]["nu_hat"], 0), 0.6, 1e-9);
  EXPECT_NEAR(at(rows[0]["nu_hat"], 1), 0.2, 1e-9);
  const std::vector<double> first{-0.07, 0.03, 0.03, 0.13};
  const std::vector<double> full{-0.32, 0.08, -0.12, 0.28};
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_NEAR(at(rows[0]["outcome_utilities"], k), first[k], 1e-9);
    EXPECT_NEAR(at(rows[1]["outcome_utilities"], k), full[k], 1e-9);
  }
  EXPECT_EQ(rows[0]["tight_labels"][0], "w00");
}

TEST(SolveCommand, EmptyBudgetListPrintsNothing) {
  bm::CommandOptions opt;
  opt.budgets = std::vector<double>{};
  const auto r = run(bm::run_solve, load("e1_square"), opt);
  EXPECT_EQ(r.code, 0);
  EXPECT_TRUE(r.out.empty());
}

TEST(SolveCommand, BeliefOutsideHullIsInvalid) {
  auto s = load("e1_square");
  s.belief = {1.5, 0.3};
  const auto r = run(bm::run_solve, s);
  EXPECT_EQ(r.code, 2);
  EXPECT_TRUE(r.out.empty());
  EXPECT_EQ(r.errors.size(), 1u);
}

TEST(SolveCommand, NumbersHaveTwelveSignificantDigits) {
  const auto r = run(bm::run_solve, load("simplex_lmsr"));
  ASSERT_EQ(r.code, 0);
  for (const auto& row : json_lines(r.out)) {
    for (const auto& x : row["nu_hat"]) {
      const std::string text = x.dump();
      std::size_t digits = 0;
      for (char c : text.substr(0, text.find('e')))
        if (std::isdigit(static_cast<unsigned char>(c))) ++digits;
      EXPECT_LE(digits, 13u) << text;  // a leading "0." adds one
    }
  }
}

TEST(PathCommand, SquareSegmentsAndCsv) {
  auto opt = json_opt();
  const fs::path csv = fs::temp_directory_path() / "bregman_market_square_path.csv";
  opt.csv_out = csv.string();
  const auto r = run(bm::run_path, load("e1_square"), opt);
  ASSERT_EQ(r.code, 0);
  const Json j = Json::parse(r.out);
  ASSERT_EQ(j["segments"].size(), 2u);
  EXPECT_NEAR(at(j["segments"][0]["end"], 1), 1.0 / 6.0, 1e-9);
  EXPECT_NEAR(j["total_budget"].get<double>(), 0.32, 1e-9);
  EXPECT_TRUE(j["authoritative"].get<bool>());
  EXPECT_TRUE(r.warnings.empty());
  std::ifstream in(csv);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "segment_index,lambda,nu_0,nu_1,budget");
  fs::remove(csv);
}

TEST(PathCommand, ObtuseTriangleWarns) {
  const auto r = run(bm::run_path, load("e2_obtuse"));
  ASSERT_EQ(r.code, 0);
  ASSERT_FALSE(r.warnings.empty());
  EXPECT_NE(r.warnings.front().find("segment 1"), std::string::npos);
  EXPECT_NE(r.out.find("acute violations: 1"), std::string::npos);
}

TEST(PathCommand, StartAtBeliefHasNoSegments) {
  auto s = load("e1_square");
  s.initial_state = std::vector<double>{0.9, 0.3};
  const auto r = run(bm::run_path, s, json_opt());
  ASSERT_EQ(r.code, 0);
  EXPECT_TRUE(Json::parse(r.out)["segments"].empty());
}

TEST(AdditivityCommand, ObtuseTriangleNotAdditive) {
  const auto r = run(bm::run_additivity, load("e2_obtuse"), json_opt());
  ASSERT_EQ(r.code, 0);
  const Json j = Json::parse(r.out);
  EXPECT_FALSE(j["additive"].get<bool>());
  const double root = std::sqrt(105.0 / 13.0);
  EXPECT_NEAR(at(j["price_sequential"], 0), 0.9 * root, 1e-6);
  EXPECT_NEAR(at(j["price_sequential"], 1), 0.6 * root, 1e-6);
  EXPECT_NEAR(at(j["price_combined"], 0), 2.7, 1e-6);
  EXPECT_NEAR(at(j["price_combined"], 1), 1.8, 1e-6);
}

TEST(AdditivityCommand, SquareAdditiveAndLogPartitionToo) {
  auto s = load("e1_square");
  EXPECT_TRUE(Json::parse(run(bm::run_additivity, s, json_opt()).out)["additive"].get<bool>());
  auto tri = load("e2_obtuse");
  tri.cost.kind = bm::CostKind::log_partition;
  const auto r = run(bm::run_additivity, tri, json_opt());
  ASSERT_EQ(r.code, 0) << (r.errors.empty() ? "" : r.errors.front());
  EXPECT_TRUE(Json::parse(r.out)["additive"].get<bool>());
}

TEST(AdditivityCommand, NeedsTwoBudgets) {
  bm::CommandOptions opt;
  opt.budgets = std::vector<double>{0.1};
  EXPECT_EQ(run(bm::run_additivity, load("e1_square"), opt).code, 2);
}

TEST(CertifyCommand, Matrix) {
  EXPECT_EQ(Json::parse(run(bm::run_certify, load("hypercube_quadratic"), json_opt()).out)["status"], "certified");
  EXPECT_EQ(Json::parse(run(bm::run_certify, load("direct_sum_industry"), json_opt()).out)["status"], "certified");
  const Json refuted = Json::parse(run(bm::run_certify, load("e2_obtuse"), json_opt()).out);
  EXPECT_EQ(refuted["status"], "refuted_face");
  EXPECT_NEAR(refuted["evidence"]["dot"].get<double>(), -7.56, 1e-9);
  EXPECT_EQ(refuted["evidence"]["face_labels"][0], "w2");
}

TEST(SearchCommand, ObtuseFindsAndSimplexDoesNot) {
  bm::CommandOptions opt = json_opt();
  opt.seed = 7;
  const Json found = Json::parse(run(bm::run_search, load("e2_obtuse"), opt).out);
  EXPECT_TRUE(found["found"].get<bool>());
  EXPECT_GT(found["report"]["gap"].get<double>(), 1e-3);
  const Json none = Json::parse(run(bm::run_search, load("simplex_lmsr"), json_opt()).out);
  EXPECT_FALSE(none["found"].get<bool>());
  opt.trials = 0;
  EXPECT_EQ(run(bm::run_search, load("simplex_lmsr"), opt).code, 2);
}

// Output of every subcommand on every bundled scenario is pinned. Set
// BREGMAN_MARKET_UPDATE_GOLDEN=1 to rewrite the files.
TEST(Golden, BundledScenarioOutputsAreStable) {
  const bool update = std::getenv("BREGMAN_MARKET_UPDATE_GOLDEN") != nullptr;
  const auto start = std::chrono::steady_clock::now();
  for (const std::string name : {"e1_square", "e2_obtuse", "simplex_lmsr", "hypercube_quadratic",
                                 "direct_sum_industry"}) {
    const auto s = load(name);
    std::vector<std::pair<std::string, CommandRun>> outputs{
        {"solve", run(bm::run_solve, s)},
        {"path", run(bm::run_path, s, json_opt())},
        {"additivity", run(bm::run_additivity, s, json_opt())},
        {"certify", run(bm::run_certify, s, json_opt())},
    };
    for (const auto& [cmd, r] : outputs) {
      EXPECT_EQ(r.code, 0) << name << " " << cmd;
      const fs::path golden = fs::path(BREGMAN_MARKET_GOLDEN_DIR) / (name + "." + cmd + ".json");
      if (update) {
        std::ofstream(golden) << r.out;
        continue;
      }
      std::ifstream in(golden);
      ASSERT_TRUE(in.good()) << golden;
      std::stringstream ss;
      ss << in.rdbuf();
      const auto got = documents(r.out), want = documents(ss.str());
      ASSERT_EQ(got.size(), want.size()) << golden;
      for (std::size_t i = 0; i < got.size(); ++i) EXPECT_TRUE(json_close(got[i], want[i])) << golden;
    }
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_LT(seconds, 10.0);
}

}  // namespace
