#include "broyden_lab/solver.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace broyden_lab {

std::string_view to_string(Method m) {
  switch (m) {
    case Method::Newton: return "newton";
    case Method::BroydenClassical: return "classical";
    case Method::BroydenBad: return "bad";
    case Method::BroydenGreedy: return "greedy";
    case Method::BroydenRandom: return "random";
  }
  return "unknown";
}

std::string_view to_string(InitKind k) {
  switch (k) {
    case InitKind::ExactJacobianAtX0: return "exact-j0";
    case InitKind::ScaledIdentity: return "scaled-identity";
    case InitKind::ScaledJacobianAtX0: return "scaled-j0";
    case InitKind::ScaledJacobianAtStar: return "scaled-jstar";
  }
  return "unknown";
}

std::string_view to_string(SolverStatus s) {
  switch (s) {
    case SolverStatus::Running: return "Running";
    case SolverStatus::Converged: return "Converged";
    case SolverStatus::MaxIters: return "MaxIters";
    case SolverStatus::Degenerate: return "Degenerate";
    case SolverStatus::DomainError: return "DomainError";
  }
  return "Unknown";
}

std::optional<Method> parse_method(std::string_view name) {
  for (auto m : {Method::Newton, Method::BroydenClassical, Method::BroydenBad,
                 Method::BroydenGreedy, Method::BroydenRandom}) {
    if (to_string(m) == name) return m;
  }
  return std::nullopt;
}

std::optional<InitKind> parse_init_kind(std::string_view name) {
  for (auto k : {InitKind::ExactJacobianAtX0, InitKind::ScaledIdentity,
                 InitKind::ScaledJacobianAtX0, InitKind::ScaledJacobianAtStar}) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

std::optional<DirectionKind> parse_direction_kind(std::string_view name) {
  for (auto k : {DirectionKind::RandomBasis, DirectionKind::RandomSphere,
                 DirectionKind::RandomGaussian}) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

void SolverConfig::validate() const {
  if (!(tol_residual > 0.0)) throw Error(ErrorKind::InvalidArgument, "tol_residual must be > 0");
  if (max_iters < 1) throw Error(ErrorKind::InvalidArgument, "max_iters must be >= 1");
  if (init.kind != InitKind::ExactJacobianAtX0 && (init.scale == 0.0 || !std::isfinite(init.scale))) {
    throw Error(ErrorKind::InvalidArgument, "init scale must be finite and nonzero");
  }
  if (method == Method::BroydenRandom && !is_random(direction_rule.kind)) {
    throw Error(ErrorKind::InvalidArgument, "random method needs a random direction rule");
  }
}

nlohmann::json SolverConfig::to_json() const {
  return {{"method", to_string(method)},
          {"direction", to_string(direction_rule.kind)},
          {"direction_seed", direction_rule.seed},
          {"init", to_string(init.kind)},
          {"scale", init.scale},
          {"tol_residual", tol_residual},
          {"max_iters", max_iters},
          {"seed", seed},
          {"record_sigma", record_sigma},
          {"debug_checks", debug_checks},
          {"fd_jacobian", fd_jacobian}};
}

namespace {

constexpr std::uint64_t kDirectionStream = 1;

bool tracks_B(const SolverConfig& cfg) {
  switch (cfg.method) {
    case Method::BroydenGreedy:
    case Method::BroydenRandom: return true;
    case Method::BroydenClassical: return cfg.debug_checks || cfg.record_sigma;
    default: return false;
  }
}

void require_finite_step(const Vector& x, const Vector& fx) {
  require_finite(x, "iterate");
  require_finite(fx, "residual");
}

// x+ = x - H F(x), with its residual.
struct QuasiNewtonMove {
  Vector x;
  Vector fx;
  Vector step;
};

QuasiNewtonMove quasi_newton_move(const Problem& p, const SolverState& s) {
  QuasiNewtonMove mv;
  mv.step = -(s.pair.H * s.fx);
  mv.x = s.x + mv.step;
  require_finite(mv.x, "iterate");
  mv.fx = p.residual(mv.x);
  require_finite(mv.fx, "residual");
  return mv;
}

SolverState advance(const SolverState& s, QuasiNewtonMove&& mv) {
  SolverState out = s;
  out.x = std::move(mv.x);
  out.fx = std::move(mv.fx);
  out.last_step_norm = mv.step.norm();
  out.last_direction.reset();
  out.k = s.k + 1;
  return out;
}

// Shared tail of the greedy and random steps: exact (or FD) Jacobian action
// along u at the new point, then the good update of B and its inverse.
void apply_basis_update(SolverState& s, const Vector& y, const Vector& u) {
  s.pair.H = sherman_morrison_inverse(s.pair.H, y, u);
  s.pair.B = broyden_secant_update(s.pair.B, y, u);
}

ErrorKind classify(SolverStatus& status, const Error& e) {
  switch (e.kind()) {
    case ErrorKind::SingularMatrix:
    case ErrorKind::DegenerateUpdate:
    case ErrorKind::ZeroDirection:
    case ErrorKind::NonConvergence: status = SolverStatus::Degenerate; break;
    default: status = SolverStatus::DomainError; break;
  }
  return e.kind();
}

nlohmann::json problem_descriptor(const Problem& p) {
  nlohmann::json doc = p.to_json();
  for (const char* key : {"A", "C", "b", "x_star"}) doc.erase(key);
  return doc;
}

}  // namespace

Vector newton_step(const Problem& p, const Vector& x) {
  const Vector fx = p.residual(x);
  return x - lu_solve(p.jacobian(x), fx);
}

SolverState initial_state(const Problem& p, const Vector& x0, const SolverConfig& cfg) {
  if (x0.size() != p.dim()) throw Error(ErrorKind::DimensionMismatch, "x0 length differs from n");
  require_finite(x0, "x0");
  SolverState s;
  s.x = x0;
  s.fx = p.residual(x0);
  require_finite(s.fx, "F(x0)");
  if (cfg.method == Method::Newton) return s;

  const Index n = p.dim();
  Matrix b0;
  switch (cfg.init.kind) {
    case InitKind::ExactJacobianAtX0: b0 = p.jacobian(x0); break;
    case InitKind::ScaledIdentity: b0 = cfg.init.scale * Matrix::Identity(n, n); break;
    case InitKind::ScaledJacobianAtX0: b0 = cfg.init.scale * p.jacobian(x0); break;
    case InitKind::ScaledJacobianAtStar: {
      const auto& sol = p.known_solution();
      if (!sol) {
        throw Error(ErrorKind::InvalidArgument, "scaled-jstar initialization needs a known x*");
      }
      b0 = cfg.init.scale * p.jacobian(sol->x);
      break;
    }
  }
  require_finite(b0, "B0");
  s.pair.H = lu_inverse(b0);
  if (tracks_B(cfg)) s.pair.B = std::move(b0);
  return s;
}

SolverState classical_broyden_step(const Problem& p, const SolverState& state,
                                   const SolverConfig&) {
  QuasiNewtonMove mv = quasi_newton_move(p, state);
  const Vector u = mv.step;
  const Vector y = mv.fx - state.fx;
  SolverState out = advance(state, std::move(mv));
  if (u.norm() == 0.0) return out;
  out.pair.H = sherman_morrison_inverse(state.pair.H, y, u);
  if (state.has_B()) out.pair.B = broyden_secant_update(state.pair.B, y, u);
  return out;
}

SolverState bad_broyden_step(const Problem& p, const SolverState& state, const SolverConfig&) {
  QuasiNewtonMove mv = quasi_newton_move(p, state);
  const Vector u = mv.step;
  const Vector y = mv.fx - state.fx;
  SolverState out = advance(state, std::move(mv));
  if (u.norm() == 0.0) return out;
  out.pair.H = broyden_bad_update(state.pair.H, y, u);
  out.pair.B.resize(0, 0);
  return out;
}

SolverState greedy_broyden_step(const Problem& p, const SolverState& state,
                                const SolverConfig& cfg) {
  if (!state.has_B()) throw Error(ErrorKind::InvalidArgument, "greedy step needs B in the state");
  SolverState out = advance(state, quasi_newton_move(p, state));
  // One full Jacobian at x_{k+1}, shared by the direction choice and y_k.
  const Matrix j_next = cfg.fd_jacobian ? finite_diff_jacobian(p, out.x) : p.jacobian(out.x);
  require_finite(j_next, "J(x_{k+1})");
  const Index i = greedy_direction(state.pair.B, j_next);
  const Vector u = Vector::Unit(p.dim(), i);
  const Vector y = j_next.col(i);
  apply_basis_update(out, y, u);
  out.last_direction = i;
  return out;
}

SolverState random_broyden_step(const Problem& p, const SolverState& state, RngStream& stream,
                                const SolverConfig& cfg) {
  if (!state.has_B()) throw Error(ErrorKind::InvalidArgument, "random step needs B in the state");
  SolverState out = advance(state, quasi_newton_move(p, state));
  const Direction d = random_direction(p.dim(), cfg.direction_rule, stream);
  Vector y;
  if (cfg.fd_jacobian) {
    y = finite_diff_action(p, out.x, d.u);
  } else if (d.basis_index) {
    y = p.jacobian_column(out.x, *d.basis_index);
  } else {
    y = p.jacobian_action(out.x, d.u);
  }
  require_finite(y, "J(x_{k+1}) u");
  apply_basis_update(out, y, d.u);
  out.last_direction = d.basis_index;
  return out;
}

IterationTrace solve(const Problem& p, const Vector& x0, const SolverConfig& cfg) {
  cfg.validate();
  const auto started = std::chrono::steady_clock::now();
  IterationTrace trace;
  const auto& sol = p.known_solution();
  const bool oracle_assisted =
      cfg.method != Method::Newton && cfg.init.kind == InitKind::ScaledJacobianAtStar;

  auto finish = [&](const SolverState* state) {
    if (state) trace.x_final = state->x;
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    trace.metadata = {{"config", cfg.to_json()},
                      {"problem", problem_descriptor(p)},
                      {"rng", RngStream::kIdentity},
                      {"oracle_assisted", oracle_assisted},
                      {"outside_analysis", cfg.fd_jacobian},
                      {"status", to_string(trace.status)},
                      {"message", trace.message},
                      {"iterations", trace.iterations()},
                      {"wall_time_s", wall}};
    if (trace.records.size() > 0) trace.metadata["final_res_norm"] = trace.records.back().res_norm;
    return trace;
  };

  if (cfg.init.kind == InitKind::ScaledJacobianAtStar && cfg.method != Method::Newton && !sol) {
    throw Error(ErrorKind::InvalidArgument, "scaled-jstar initialization needs a known x*");
  }

  SolverState state;
  try {
    state = initial_state(p, x0, cfg);
  } catch (const Error& e) {
    classify(trace.status, e);
    trace.message = e.what();
    trace.x_final = x0;
    return finish(nullptr);
  }

  RngStream stream(cfg.direction_rule.seed, kDirectionStream);

  auto record = [&](const SolverState& s) {
    IterationRecord rec;
    rec.k = s.k;
    rec.res_norm = s.fx.norm();
    if (sol) rec.r_k = (s.x - sol->x).norm();
    if (cfg.record_sigma || cfg.debug_checks) {
      Matrix b;
      if (cfg.method == Method::Newton) {
        // Newton uses B_k = J(x_k) exactly.
      } else if (s.has_B()) {
        b = s.pair.B;
      } else {
        try {
          b = lu_inverse(s.pair.H);
        } catch (const Error&) {
        }
      }
      if (cfg.record_sigma) {
        const Matrix jk = p.jacobian(s.x);
        const double jn = jk.norm();
        if (cfg.method == Method::Newton) {
          rec.sigma_abs = 0.0;
          if (cfg.record_spectral_sigma) rec.sigma_spectral = 0.0;
        } else if (b.size() > 0) {
          rec.sigma_abs = (b - jk).norm();
          if (cfg.record_spectral_sigma) rec.sigma_spectral = spectral_norm(b - jk);
        }
        if (rec.sigma_abs && jn > 0.0) rec.sigma_rel = *rec.sigma_abs / jn;
      }
      if (cfg.debug_checks && b.size() > 0 && s.pair.H.size() > 0) {
        rec.inverse_residual = JacobianPair{b, s.pair.H}.inverse_residual();
      }
    }
    trace.records.push_back(rec);
  };

  auto fail = [&](const Error& e) {
    classify(trace.status, e);
    trace.message = e.what();
  };

  try {
    record(state);
  } catch (const Error& e) {
    fail(e);
    return finish(&state);
  }

  while (true) {
    if (trace.records.back().res_norm <= cfg.tol_residual) {
      trace.status = SolverStatus::Converged;
      break;
    }
    if (state.k >= cfg.max_iters) {
      trace.status = SolverStatus::MaxIters;
      break;
    }
    try {
      switch (cfg.method) {
        case Method::Newton: {
          SolverState next = state;
          next.x = state.x - lu_solve(p.jacobian(state.x), state.fx);
          require_finite(next.x, "iterate");
          next.fx = p.residual(next.x);
          require_finite_step(next.x, next.fx);
          next.last_step_norm = (next.x - state.x).norm();
          next.k = state.k + 1;
          state = std::move(next);
          break;
        }
        case Method::BroydenClassical: state = classical_broyden_step(p, state, cfg); break;
        case Method::BroydenBad: state = bad_broyden_step(p, state, cfg); break;
        case Method::BroydenGreedy: state = greedy_broyden_step(p, state, cfg); break;
        case Method::BroydenRandom: state = random_broyden_step(p, state, stream, cfg); break;
      }
      trace.records.back().step_norm = state.last_step_norm;
      trace.records.back().direction_index = state.last_direction;
      record(state);
    } catch (const Error& e) {
      fail(e);
      break;
    }
  }
  return finish(&state);
}

// -------------------------------------------------------------------- csv

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
std::string cell(const std::optional<T>& v) {
  if (!v) return {};
  if constexpr (std::is_floating_point_v<T>) {
    return format_double(*v);
  } else {
    return std::to_string(*v);
  }
}

std::optional<double> parse_double_cell(const std::string& s) {
  if (s.empty()) return std::nullopt;
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw Error(ErrorKind::InvalidArgument, "bad numeric cell '" + s + "'");
  return v;
}

void write_atomically(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::InvalidArgument, "cannot write " + tmp);
    out << content;
    if (!out) throw Error(ErrorKind::InvalidArgument, "failed writing " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

void write_trace_csv(std::ostream& out, const IterationTrace& trace) {
  out << kTraceCsvHeader << '\n';
  for (const auto& r : trace.records) {
    out << r.k << ',' << format_double(r.res_norm) << ',' << cell(r.r_k) << ','
        << cell(r.sigma_abs) << ',' << cell(r.sigma_rel) << ',' << cell(r.direction_index)
        << ',' << cell(r.step_norm) << '\n';
  }
}

std::vector<IterationRecord> read_trace_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kTraceCsvHeader) {
    throw Error(ErrorKind::InvalidArgument, "trace CSV header mismatch");
  }
  std::vector<IterationRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string c;
    std::istringstream ls(line);
    while (std::getline(ls, c, ',')) cells.push_back(c);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (cells.size() != 7) throw Error(ErrorKind::InvalidArgument, "trace CSV row needs 7 cells");
    IterationRecord r;
    r.k = std::stoi(cells[0]);
    r.res_norm = parse_double_cell(cells[1]).value_or(0.0);
    r.r_k = parse_double_cell(cells[2]);
    r.sigma_abs = parse_double_cell(cells[3]);
    r.sigma_rel = parse_double_cell(cells[4]);
    if (!cells[5].empty()) r.direction_index = std::stoll(cells[5]);
    r.step_norm = parse_double_cell(cells[6]);
    records.push_back(r);
  }
  return records;
}

void write_trace_files(const std::string& stem, const IterationTrace& trace) {
  std::ostringstream csv;
  write_trace_csv(csv, trace);
  write_atomically(stem + ".csv", csv.str());
  write_atomically(stem + ".json", trace.metadata.dump(2) + "\n");
}

}  // namespace broyden_lab
