#include "broyden_lab/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

namespace broyden_lab {

std::string_view to_string(X0Distribution d) {
  switch (d) {
    case X0Distribution::Sphere: return "sphere";
    case X0Distribution::Normal: return "normal";
    case X0Distribution::NearSolution: return "near-solution";
  }
  return "?";
}

std::optional<X0Distribution> parse_x0_distribution(std::string_view name) {
  for (auto d : {X0Distribution::Sphere, X0Distribution::Normal, X0Distribution::NearSolution}) {
    if (to_string(d) == name) return d;
  }
  return std::nullopt;
}

Vector draw_x0(const Problem& p, X0Distribution dist, double rho, RngStream& stream) {
  const Index n = p.dim();
  switch (dist) {
    case X0Distribution::Sphere: return stream.unit_sphere(n);
    case X0Distribution::Normal: return stream.normal_vector(n);
    case X0Distribution::NearSolution: {
      const auto& sol = p.known_solution();
      if (!sol) throw Error(ErrorKind::InvalidArgument, "near-solution x0 needs a known x*");
      if (!(rho >= 0.0 && std::isfinite(rho))) {
        throw Error(ErrorKind::InvalidArgument, "rho must be finite and >= 0");
      }
      return sol->x + rho * sol->x.norm() * stream.unit_sphere(n);
    }
  }
  throw Error(ErrorKind::InvalidArgument, "unknown x0 distribution");
}

// ------------------------------------------------------------------- spec

namespace {

using nlohmann::json;

[[noreturn]] void bad_spec(const std::string& what) {
  throw Error(ErrorKind::InvalidArgument, "experiment spec: " + what);
}

template <typename T>
T field(const json& doc, const char* key, T fallback) {
  if (!doc.contains(key)) return fallback;
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception&) {
    bad_spec(std::string("field '") + key + "' has the wrong type");
  }
}

json normalize_problem(const json& doc) {
  if (!doc.is_object() || !doc.contains("kind")) bad_spec("problem needs a kind");
  json p = doc;
  const auto kind = p.at("kind").get<std::string>();
  if (!p.contains("n")) bad_spec("problem needs n");
  if (kind == "logsumexp") {
    if (!p.contains("gamma")) p["gamma"] = 1.0;
    if (!p.contains("m")) p["m"] = 2 * p.at("n").get<Index>();
    if (!p.contains("seed") || p.at("seed").is_null()) p["seed"] = 0;
  } else if (kind == "hequation") {
    if (!p.contains("c")) p["c"] = 0.9;
  } else if (kind == "linear") {
    if (!p.contains("A") && (!p.contains("seed") || p.at("seed").is_null())) p["seed"] = 0;
  } else {
    bad_spec("unknown problem kind '" + kind + "'");
  }
  return p;
}

InitSpec parse_init(const json& doc) {
  InitSpec s;
  const std::string scheme = doc.is_string() ? doc.get<std::string>() : field<std::string>(doc, "scheme", "");
  const auto kind = parse_init_kind(scheme);
  if (!kind) bad_spec("unknown init scheme '" + scheme + "'");
  s.kind = *kind;
  s.label = scheme;
  if (doc.is_object() && doc.contains("scale")) {
    const auto& sc = doc.at("scale");
    if (sc.is_string()) {
      if (sc.get<std::string>() != "smoothness") bad_spec("scale must be a number or \"smoothness\"");
      s.smoothness_scale = true;
      s.label += "-L";
    } else if (sc.is_number()) {
      s.scale = sc.get<double>();
      char buf[32];
      std::snprintf(buf, sizeof buf, "-%g", s.scale);
      s.label += buf;
    } else {
      bad_spec("scale must be a number or \"smoothness\"");
    }
  }
  if (doc.is_object() && doc.contains("label")) s.label = doc.at("label").get<std::string>();
  return s;
}

DirectionRule parse_direction(const json& doc, DirectionRule rule) {
  if (doc.is_string()) {
    const auto k = parse_direction_kind(doc.get<std::string>());
    if (!k) bad_spec("unknown direction '" + doc.get<std::string>() + "'");
    rule.kind = *k;
    return rule;
  }
  if (doc.contains("kind")) {
    const auto name = doc.at("kind").get<std::string>();
    const auto k = parse_direction_kind(name);
    if (!k) bad_spec("unknown direction '" + name + "'");
    rule.kind = *k;
  }
  rule.seed = field<std::uint64_t>(doc, "seed", rule.seed);
  return rule;
}

std::string sanitize(std::string s) {
  for (auto& ch : s) {
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.')) ch = '_';
  }
  return s;
}

}  // namespace

ExperimentSpec parse_experiment_spec(const json& doc) {
  if (!doc.is_object()) bad_spec("top level must be an object");
  if (!doc.contains("schema_version")) bad_spec("schema_version is mandatory");
  ExperimentSpec spec;
  spec.schema_version = field<int>(doc, "schema_version", 0);
  if (spec.schema_version != kSpecSchemaVersion) {
    bad_spec("unsupported schema_version " + std::to_string(spec.schema_version));
  }
  if (!doc.contains("problem")) bad_spec("problem is mandatory");
  spec.problem = normalize_problem(doc.at("problem"));

  if (!doc.contains("methods") || !doc.at("methods").is_array()) bad_spec("methods must be a list");
  for (const auto& m : doc.at("methods")) {
    const auto name = m.get<std::string>();
    const auto method = parse_method(name);
    if (!method) bad_spec("unknown method '" + name + "'");
    spec.methods.push_back(*method);
  }
  if (spec.methods.empty()) bad_spec("method list is empty");

  const std::uint64_t seed = field<std::uint64_t>(doc, "seed", 0);
  spec.direction.seed = seed;
  spec.x0_seed = seed;
  if (doc.contains("direction")) spec.direction = parse_direction(doc.at("direction"), spec.direction);

  if (doc.contains("inits")) {
    if (!doc.at("inits").is_array()) bad_spec("inits must be a list");
    for (const auto& i : doc.at("inits")) spec.inits.push_back(parse_init(i));
  }
  if (spec.inits.empty()) spec.inits.push_back(parse_init(json("exact-j0")));

  if (doc.contains("x0")) {
    const auto& x = doc.at("x0");
    const auto name = field<std::string>(x, "distribution", "sphere");
    const auto d = parse_x0_distribution(name);
    if (!d) bad_spec("unknown x0 distribution '" + name + "'");
    spec.x0 = *d;
    spec.rho = field<double>(x, "rho", spec.rho);
    spec.x0_seed = field<std::uint64_t>(x, "seed", spec.x0_seed);
  }
  spec.shared_x0 = field<bool>(doc, "shared_x0", true);
  spec.tol = field<double>(doc, "tol", spec.tol);
  spec.max_iters = field<int>(doc, "max_iters", spec.max_iters);
  spec.record_sigma = field<bool>(doc, "record_sigma", spec.record_sigma);
  spec.output_dir = field<std::string>(doc, "output_dir", spec.output_dir);
  if (doc.contains("overrides")) {
    if (!doc.at("overrides").is_object()) bad_spec("overrides must be an object");
    for (const auto& [name, ov] : doc.at("overrides").items()) {
      if (!parse_method(name)) bad_spec("override for unknown method '" + name + "'");
      spec.overrides[name] = ov;
    }
  }
  if (!(spec.tol > 0.0)) bad_spec("tol must be > 0");
  if (spec.max_iters < 1) bad_spec("max_iters must be >= 1");
  return spec;
}

// ------------------------------------------------------------------- runs

bool BenchResult::all_failed() const {
  return std::all_of(cells.begin(), cells.end(), [](const CellResult& c) { return c.failed; });
}

int bench_thread_count(std::size_t cells) {
  long want = static_cast<long>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("BROYDEN_LAB_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) want = v;
  }
  return static_cast<int>(std::clamp<long>(want, 1, std::max<long>(1, static_cast<long>(cells))));
}

std::optional<double> sigma_decay_slope(const IterationTrace& trace) {
  double n = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& r : trace.records) {
    if (!r.sigma_rel || !(*r.sigma_rel > 0.0) || !std::isfinite(*r.sigma_rel)) continue;
    const double x = r.k;
    const double y = std::log10(*r.sigma_rel);
    n += 1;
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double den = n * sxx - sx * sx;
  if (n < 2 || den == 0.0) return std::nullopt;
  return (n * sxy - sx * sy) / den;
}

namespace {

struct Cell {
  Method method;
  InitSpec init;
  SolverConfig cfg;
  Vector x0;
  std::string stem;
};

SolverConfig cell_config(const ExperimentSpec& spec, Method method, const InitSpec& init,
                         const Problem& p) {
  SolverConfig cfg;
  cfg.method = method;
  cfg.direction_rule = spec.direction;
  cfg.init = {init.kind, init.scale};
  if (init.smoothness_scale) {
    const auto* lse = dynamic_cast<const LogSumExpProblem*>(&p);
    if (!lse) bad_spec("\"smoothness\" scale needs a logsumexp problem");
    cfg.init.scale = lse->smoothness_constant();
  }
  cfg.tol_residual = spec.tol;
  cfg.max_iters = spec.max_iters;
  cfg.record_sigma = spec.record_sigma;
  cfg.seed = spec.x0_seed;
  const auto it = spec.overrides.find(std::string(to_string(method)));
  if (it != spec.overrides.end()) {
    const auto& ov = it->second;
    cfg.tol_residual = field<double>(ov, "tol", cfg.tol_residual);
    cfg.max_iters = field<int>(ov, "max_iters", cfg.max_iters);
    cfg.fd_jacobian = field<bool>(ov, "fd_jacobian", cfg.fd_jacobian);
    cfg.record_sigma = field<bool>(ov, "record_sigma", cfg.record_sigma);
    if (ov.contains("direction")) cfg.direction_rule = parse_direction(ov.at("direction"), cfg.direction_rule);
    cfg.direction_rule.seed = field<std::uint64_t>(ov, "direction_seed", cfg.direction_rule.seed);
  }
  cfg.validate();
  return cfg;
}

CellResult summarize(const Cell& cell, const IterationTrace& trace, double tol) {
  CellResult r;
  r.method = cell.method;
  r.init_label = cell.init.label;
  r.status = trace.status;
  r.message = trace.message;
  r.iterations = trace.iterations();
  r.failed = trace.status == SolverStatus::Degenerate || trace.status == SolverStatus::DomainError;
  if (!trace.records.empty()) r.final_res_norm = trace.records.back().res_norm;
  for (const auto& rec : trace.records) {
    if (rec.res_norm <= tol) {
      r.iterations_to_tol = rec.k;
      break;
    }
  }
  for (auto it = trace.records.rbegin(); it != trace.records.rend(); ++it) {
    if (it->sigma_rel) {
      r.final_sigma_rel = *it->sigma_rel;
      break;
    }
  }
  r.sigma_decay_slope = sigma_decay_slope(trace);
  return r;
}

template <typename T>
json opt(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

json finite_or_null(const std::optional<double>& v) {
  return v && std::isfinite(*v) ? json(*v) : json(nullptr);
}

}  // namespace

BenchResult run_bench(const ExperimentSpec& spec) {
  namespace fs = std::filesystem;
  const ProblemPtr problem = problem_from_json(spec.problem);
  fs::create_directories(spec.output_dir);

  RngStream x0_stream(spec.x0_seed, 2);
  const Vector shared = draw_x0(*problem, spec.x0, spec.rho, x0_stream);

  std::vector<Cell> cells;
  std::size_t index = 0;
  for (const auto& init : spec.inits) {
    for (const auto method : spec.methods) {
      Cell c{method, init, cell_config(spec, method, init, *problem), shared, {}};
      if (!spec.shared_x0) {
        RngStream own = x0_stream.split(index);
        c.x0 = draw_x0(*problem, spec.x0, spec.rho, own);
      }
      c.stem = (fs::path(spec.output_dir) /
                sanitize(std::string(to_string(method)) + "__" + init.label))
                   .string();
      cells.push_back(std::move(c));
      ++index;
    }
  }

  BenchResult result;
  result.cells.resize(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      const Cell& c = cells[i];
      CellResult r;
      try {
        const IterationTrace trace = solve(*problem, c.x0, c.cfg);
        write_trace_files(c.stem, trace);
        r = summarize(c, trace, c.cfg.tol_residual);
        r.trace_file = fs::path(c.stem + ".csv").filename().string();
      } catch (const std::exception& e) {
        r.method = c.method;
        r.init_label = c.init.label;
        r.status = SolverStatus::DomainError;
        r.message = e.what();
        r.failed = true;
      }
      result.cells[i] = std::move(r);
    }
  };
  const int threads = bench_thread_count(cells.size());
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  json problem_doc = problem->to_json();
  for (const char* big : {"A", "b", "C", "x_star"}) problem_doc.erase(big);

  json cells_doc = json::array();
  std::map<std::string, std::vector<double>> slopes;
  for (const auto& c : result.cells) {
    cells_doc.push_back({{"method", to_string(c.method)},
                         {"init", c.init_label},
                         {"status", to_string(c.status)},
                         {"message", c.message},
                         {"failed", c.failed},
                         {"iterations", c.iterations},
                         {"final_res_norm", finite_or_null(c.final_res_norm)},
                         {"iterations_to_tol", opt(c.iterations_to_tol)},
                         {"final_sigma_rel", finite_or_null(c.final_sigma_rel)},
                         {"sigma_decay_slope", finite_or_null(c.sigma_decay_slope)},
                         {"trace_file", c.trace_file.empty() ? json(nullptr) : json(c.trace_file)}});
    if (c.sigma_decay_slope && std::isfinite(*c.sigma_decay_slope)) {
      slopes[std::string(to_string(c.method))].push_back(*c.sigma_decay_slope);
    }
  }
  json per_method = json::object();
  for (const auto& [name, v] : slopes) {
    double sum = 0;
    for (double s : v) sum += s;
    per_method[name] = sum / double(v.size());
  }

  result.summary = {{"schema_version", kSpecSchemaVersion},
                    {"problem", problem_doc},
                    {"x0", {{"distribution", to_string(spec.x0)},
                            {"seed", spec.x0_seed},
                            {"rho", spec.rho},
                            {"shared", spec.shared_x0}}},
                    {"rng", RngStream::kIdentity},
                    {"tol", spec.tol},
                    {"max_iters", spec.max_iters},
                    {"cells", cells_doc},
                    {"sigma_decay_slope_by_method", per_method},
                    {"all_failed", result.all_failed()}};

  const fs::path summary_path = fs::path(spec.output_dir) / "summary.json";
  const fs::path tmp = summary_path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error(ErrorKind::InvalidArgument, "cannot write " + tmp.string());
    out << result.summary.dump(2) << '\n';
  }
  fs::rename(tmp, summary_path);
  return result;
}

}  // namespace broyden_lab
