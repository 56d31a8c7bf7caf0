#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <sstream>

#include "doctest.h"
#include "kgf/pipeline/config.hpp"
#include "kgf/pipeline/report.hpp"
#include "kgf/pipeline/stages.hpp"

namespace fs = std::filesystem;
using namespace kgf;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(KGF_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("kgf-unit-" + name);
  fs::remove_all(p);
  return p;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST_CASE("key-value configuration") {
  const auto kv = pipeline::KeyValueConfig::parse("# comment\nunlearn.lambda = 0.5\n\nexperiment.seeds = 4, 5\nunlearn.lambda = 0.25\n");
  const auto cfg = pipeline::ExperimentConfig::from(kv);
  CHECK(cfg.unlearn.lambda == 0.25);
  CHECK(cfg.seeds == std::vector<std::uint64_t>{4, 5});
  CHECK(cfg.unlearn.method == unlearn::Method::NEDS);
  CHECK(cfg.lr_grid == std::vector<double>{1e-4, 3e-5, 2e-5, 1e-5});
  CHECK(cfg.corruption_grid == std::vector<double>{0.0, 0.3, 0.5, 0.8});

  CHECK_THROWS_AS(pipeline::ExperimentConfig::from(pipeline::KeyValueConfig::parse("unlearn.lamda = 1\n")),
                  pipeline::ConfigError);
  CHECK_THROWS_AS(pipeline::KeyValueConfig::parse("no equals sign\n"), pipeline::ConfigError);

  const auto desk = pipeline::ExperimentConfig::from(pipeline::KeyValueConfig::load(KGF_DESK_CONFIG));
  desk.validate();
  const auto again = pipeline::ExperimentConfig::from(desk.to_kv());
  CHECK(again.to_kv().render() == desk.to_kv().render());
}

TEST_CASE("sweep selection") {
  using pipeline::SweepPoint;
  const double a = eval::harmonic_mean(0.9, 0.9), b = eval::harmonic_mean(1.0, 0.5);
  CHECK(a == doctest::Approx(0.9));
  CHECK(b == doctest::Approx(2.0 / 3.0));
  std::vector<SweepPoint> grid{{1e-4, true, b, 1.0, ""}, {3e-5, true, a, 0.9, ""}};
  CHECK(pipeline::select_best(grid) == std::optional<std::size_t>{1});
  CHECK(pipeline::select_best({{2e-5, true, 0.1, 0.0, ""}}) == std::optional<std::size_t>{0});
  CHECK(pipeline::select_best({{2e-5, false, 0.0, 0.0, "diverged"}}) == std::nullopt);
  std::vector<SweepPoint> tie{{1e-4, true, 0.8, 0.7, ""}, {3e-5, true, 0.8, 0.9, ""}, {2e-5, true, 0.8, 0.9, ""}};
  CHECK(pipeline::select_best(tie) == std::optional<std::size_t>{1});
}

TEST_CASE("report rendering") {
  eval::MetricsReport before;
  before.locality = 1.0;
  before.kcs_pre = before.kcs_post = 0.9;
  eval::MetricsReport r1 = before, r2 = before;
  r1.ue_direct = 1.0;
  r2.ue_direct = 0.8;
  r1.kcs_post = 0.2;
  r2.kcs_post = 0.4;
  r1.delta_kcs = -0.7;
  r2.delta_kcs = -0.5;
  r2.ue_inverse = std::numeric_limits<double>::quiet_NaN();
  std::vector<pipeline::ReportRow> rows{pipeline::before_row(before), pipeline::mean_row("NEDS", {r1, r2}, 3e-5)};
  CHECK(rows[1].metrics.ue_direct == doctest::Approx(0.9));
  CHECK(rows[1].metrics.delta_kcs == doctest::Approx(-0.6));
  CHECK(rows[1].runs == 2);

  const auto csv = lines(pipeline::render_csv(rows));
  std::vector<std::string> body;
  for (const auto& l : csv) {
    if (!l.empty() && l[0] != '#') body.push_back(l);
  }
  REQUIRE(body.size() == 3);
  CHECK(body[0] == "Method,Direct,Paraphrase,Inverse,Multi-hops,Locality,RefusalRate,Hmean,DeltaKCS,LR,Runs");
  CHECK(body[1].rfind("BE (before),", 0) == 0);
  CHECK(body[2].rfind("NEDS,0.9000,", 0) == 0);

  std::vector<pipeline::ReportRow> nan_rows{pipeline::mean_row("GA", {r2})};
  CHECK(pipeline::render_csv(nan_rows).find(",NA,") != std::string::npos);

  const auto svg = pipeline::render_svg(rows);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("NEDS") != std::string::npos);
  CHECK(svg.find("BE (before)") == std::string::npos);

  std::vector<pipeline::AblationRow> abl;
  for (double rate : {0.0, 0.3, 0.5, 0.8}) abl.push_back({rate, r1, true});
  const auto table = lines(pipeline::render_ablation_csv(abl));
  REQUIRE(table.size() == 5);
  CHECK(table[1].rfind("0.00,", 0) == 0);
  CHECK(table[2].rfind("0.30,", 0) == 0);
  CHECK(table[3].rfind("0.50,", 0) == 0);
  CHECK(table[4].rfind("0.80,", 0) == 0);
}

TEST_CASE("metrics survive a JSON round trip") {
  eval::MetricsReport m;
  m.ue_direct = 0.25;
  m.ue_inverse = std::numeric_limits<double>::quiet_NaN();
  m.hmean = 0.5;
  const auto back = pipeline::metrics_from_json(pipeline::to_json(m));
  CHECK(back.ue_direct == 0.25);
  CHECK(std::isnan(back.ue_inverse));
  CHECK(back.hmean == 0.5);
}

TEST_CASE("command line: usage errors and missing inputs") {
  CHECK(run("gen-world --no-such-flag") == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("--help") == 0);
  const auto dir = scratch("cli-missing");
  CHECK(run("build-bench --world " + (dir / "nowhere").string() + " --out " + (dir / "bench").string()) == 3);
  CHECK(run("gen-world --set unlearn.lamda=2 --out " + (dir / "w").string()) == 2);
}

TEST_CASE("command line: world generation is reproducible") {
  const auto a = scratch("cli-world-a"), b = scratch("cli-world-b");
  REQUIRE(run("gen-world --seed 7 --out " + a.string()) == 0);
  REQUIRE(run("gen-world --seed 7 --out " + b.string()) == 0);
  CHECK(fs::exists(a / "world.tsv"));
  CHECK(fs::exists(a / "world.schema.tsv"));
  const auto ma = pipeline::read_json(a / "manifest.json"), mb = pipeline::read_json(b / "manifest.json");
  CHECK(ma.at("seed") == 7);
  CHECK(ma.at("config").at("world.seed") == "7");
  CHECK(ma.at("outputs") == mb.at("outputs"));
  CHECK(pipeline::read_text(a / "world.tsv") == pipeline::read_text(b / "world.tsv"));
}
