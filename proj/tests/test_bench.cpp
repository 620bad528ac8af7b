#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "broyden_lab/bench.hpp"
#include "support.hpp"

using namespace broyden_lab;
using support::error_kind;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json small_spec(const fs::path& out) {
  return json{{"schema_version", 1},
              {"problem", {{"kind", "logsumexp"}, {"n", 6}, {"m", 10}, {"seed", 2}}},
              {"methods", {"classical", "greedy", "random"}},
              {"direction", {{"kind", "basis"}, {"seed", 3}}},
              {"inits", {"exact-j0", json{{"scheme", "scaled-identity"}, {"scale", "smoothness"}, {"label", "LI"}}}},
              {"x0", {{"distribution", "sphere"}, {"seed", 4}}},
              {"max_iters", 40},
              {"output_dir", out.string()}};
}

}  // namespace

TEST_CASE("x0 distributions") {
  auto p = make_hequation(10, 0.5);
  RngStream s(1);
  CHECK(draw_x0(*p, X0Distribution::Sphere, 0.0, s).norm() == doctest::Approx(1.0));
  const Vector near = draw_x0(*p, X0Distribution::NearSolution, 0.2, s);
  const Vector& xs = p->known_solution()->x;
  CHECK((near - xs).norm() == doctest::Approx(0.2 * xs.norm()));
  CHECK(parse_x0_distribution("near-solution") == X0Distribution::NearSolution);
  CHECK_FALSE(parse_x0_distribution("cube"));
  auto anon = std::make_shared<HEquationProblem>(4, 0.5, std::nullopt);
  CHECK(error_kind([&] { draw_x0(*anon, X0Distribution::NearSolution, 0.1, s); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("spec parsing") {
  const auto spec = parse_experiment_spec(small_spec("x"));
  CHECK(spec.methods.size() == 3);
  CHECK(spec.methods[1] == Method::BroydenGreedy);
  REQUIRE(spec.inits.size() == 2);
  CHECK(spec.inits[0].kind == InitKind::ExactJacobianAtX0);
  CHECK(spec.inits[1].smoothness_scale);
  CHECK(spec.inits[1].label == "LI");
  CHECK(spec.direction.seed == 3);
  CHECK(spec.x0_seed == 4);
  CHECK(spec.max_iters == 40);
  CHECK(spec.problem.at("gamma") == 1.0);
}

TEST_CASE("spec parsing errors") {
  auto doc = small_spec("x");
  doc["methods"] = json::array();
  CHECK(error_kind([&] { parse_experiment_spec(doc); }) == ErrorKind::InvalidArgument);
  doc = small_spec("x");
  doc.erase("schema_version");
  CHECK(error_kind([&] { parse_experiment_spec(doc); }) == ErrorKind::InvalidArgument);
  doc = small_spec("x");
  doc["schema_version"] = 2;
  CHECK(error_kind([&] { parse_experiment_spec(doc); }) == ErrorKind::InvalidArgument);
  doc = small_spec("x");
  doc["methods"] = {"lbfgs"};
  CHECK(error_kind([&] { parse_experiment_spec(doc); }) == ErrorKind::InvalidArgument);
  doc = small_spec("x");
  doc["inits"] = {"nope"};
  CHECK(error_kind([&] { parse_experiment_spec(doc); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("thread count") {
  ::setenv("BROYDEN_LAB_THREADS", "3", 1);
  CHECK(bench_thread_count(10) == 3);
  CHECK(bench_thread_count(2) == 2);
  ::setenv("BROYDEN_LAB_THREADS", "1", 1);
  CHECK(bench_thread_count(10) == 1);
  ::unsetenv("BROYDEN_LAB_THREADS");
  CHECK(bench_thread_count(1) == 1);
  CHECK(bench_thread_count(64) >= 1);
}

TEST_CASE("sigma decay slope") {
  IterationTrace t;
  for (int k = 0; k < 5; ++k) {
    IterationRecord r;
    r.k = k;
    r.sigma_rel = std::pow(10.0, -0.5 * k);
    t.records.push_back(r);
  }
  CHECK(*sigma_decay_slope(t) == doctest::Approx(-0.5));
  t.records.resize(1);
  CHECK_FALSE(sigma_decay_slope(t));
}

TEST_CASE("bench runs, writes a summary, and is deterministic across thread counts") {
  const fs::path base = fs::temp_directory_path() / "broyden_lab_bench_test";
  fs::remove_all(base);
  ::setenv("BROYDEN_LAB_THREADS", "1", 1);
  const auto a = run_bench(parse_experiment_spec(small_spec(base / "a")));
  ::setenv("BROYDEN_LAB_THREADS", "4", 1);
  const auto b = run_bench(parse_experiment_spec(small_spec(base / "b")));
  ::unsetenv("BROYDEN_LAB_THREADS");

  REQUIRE(a.cells.size() == 6);
  CHECK_FALSE(a.all_failed());
  for (const auto& c : a.cells) {
    const auto json_name = fs::path(c.trace_file).replace_extension(".json");
    CHECK(fs::exists(base / "a" / c.trace_file));
    CHECK(fs::exists(base / "a" / json_name));
    CHECK(slurp(base / "a" / c.trace_file) == slurp(base / "b" / c.trace_file));
    if (c.init_label == "exact-j0") CHECK(c.status == SolverStatus::Converged);
  }
  const json sa = json::parse(slurp(base / "a" / "summary.json"));
  const json sb = json::parse(slurp(base / "b" / "summary.json"));
  CHECK(sa == sb);
  CHECK(sa.at("schema_version") == 1);
  CHECK(sa.at("cells").size() == 6);
  CHECK(sa.at("all_failed") == false);
  CHECK_FALSE(sa.at("problem").contains("C"));
  CHECK(sa.at("sigma_decay_slope_by_method").contains("greedy"));
  CHECK_FALSE(fs::exists(base / "a" / "summary.json.tmp"));
  fs::remove_all(base);
}

TEST_CASE("all cells failing is reported") {
  const fs::path base = fs::temp_directory_path() / "broyden_lab_bench_fail";
  fs::remove_all(base);
  auto doc = small_spec(base);
  doc["methods"] = {"greedy"};
  doc["inits"] = {"exact-j0"};
  doc["max_iters"] = 1;
  doc["tol"] = 1e-300;
  // Running out of iterations is not a failure.
  CHECK_FALSE(run_bench(parse_experiment_spec(doc)).all_failed());
  fs::remove_all(base);

  BenchResult r;
  r.cells.resize(2);
  r.cells[0].failed = true;
  CHECK_FALSE(r.all_failed());
  r.cells[1].failed = true;
  CHECK(r.all_failed());
}
