#include "gfdm/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>
#include <tuple>

#include "gfdm/baselines.hpp"
#include "gfdm/gmls.hpp"
#include "gfdm/pde.hpp"
#include "gfdm/stabilize.hpp"
#include "gfdm/stencil.hpp"

namespace gfdm {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

std::string method_name(Method m) {
  switch (m) {
    case Method::GfdmRaw: return "gfdm_raw";
    case Method::GfdmLp: return "gfdm_lp";
    case Method::RbfFd: return "rbf_fd";
    case Method::Vbdm: return "vbdm";
  }
  throw Error("method_name: unknown method");
}

std::string problem_name(ProblemKind p) {
  switch (p) {
    case ProblemKind::Consistency: return "consistency";
    case ProblemKind::Closed: return "closed";
    case ProblemKind::Dirichlet: return "dirichlet";
  }
  throw Error("problem_name: unknown problem");
}

std::string frame_source_name(FrameSource f) {
  return f == FrameSource::Analytic ? "analytic" : "estimated";
}

std::string boundary_mode_name(BoundaryMode b) {
  switch (b) {
    case BoundaryMode::Detector: return "detector";
    case BoundaryMode::EpsSweep: return "eps_sweep";
    case BoundaryMode::GivenBoundary: return "given_boundary";
  }
  throw Error("boundary_mode_name: unknown mode");
}

Method parse_method(const std::string& s) {
  if (s == "gfdm_raw") return Method::GfdmRaw;
  if (s == "gfdm_lp") return Method::GfdmLp;
  if (s == "rbf_fd") return Method::RbfFd;
  if (s == "vbdm") return Method::Vbdm;
  throw Error("unknown method '" + s +
              "' (want gfdm_raw, gfdm_lp, rbf_fd, or vbdm)");
}

ProblemKind parse_problem(const std::string& s) {
  if (s == "consistency") return ProblemKind::Consistency;
  if (s == "closed") return ProblemKind::Closed;
  if (s == "dirichlet") return ProblemKind::Dirichlet;
  throw Error("unknown problem '" + s +
              "' (want consistency, closed, or dirichlet)");
}

FrameSource parse_frame_source(const std::string& s) {
  if (s == "analytic") return FrameSource::Analytic;
  if (s == "estimated") return FrameSource::Estimated;
  throw Error("unknown frame source '" + s + "' (want analytic or estimated)");
}

BoundaryMode parse_boundary_mode(const std::string& s) {
  if (s == "detector") return BoundaryMode::Detector;
  if (s == "eps_sweep") return BoundaryMode::EpsSweep;
  if (s == "given_boundary") return BoundaryMode::GivenBoundary;
  throw Error("unknown boundary mode '" + s +
              "' (want detector, eps_sweep, or given_boundary)");
}

ManifoldSpec parse_manifold_name(const std::string& s) {
  if (s == "ellipse") return make_ellipse();
  if (s == "semitorus") return make_semi_torus();
  if (s.rfind("torus", 0) == 0) {
    const std::string tail = s.substr(5);
    char* end = nullptr;
    const long amb = std::strtol(tail.c_str(), &end, 10);
    if (end != nullptr && *end == '\0' && amb >= 5 && amb % 2 == 1)
      return make_general_torus(static_cast<int>((amb - 1) / 2));
  }
  throw Error("unknown manifold '" + s +
              "' (want ellipse, torus<2q+1>, or semitorus)");
}

void validate_config(const ExperimentConfig& cfg) {
  if (cfg.n_list.empty()) throw Error("config: n list is empty");
  if (cfg.trials < 1) throw Error("config: trials must be >= 1");
  if (cfg.k < 2) throw Error("config: stencil size k must be >= 2");
  for (int n : cfg.n_list)
    if (n < cfg.k)
      throw Error("config: cloud size " + std::to_string(n) +
                  " is smaller than the stencil");
  if (cfg.kp < 0) throw Error("config: kp must be >= 0");
  if (!(cfg.shift > 0.0)) throw Error("config: shift must be positive");
  if (!(cfg.rbf_s > 0.0)) throw Error("config: rbf_s must be positive");

  const bool needs_degrees =
      cfg.method == Method::GfdmRaw || cfg.method == Method::GfdmLp;
  if (needs_degrees) {
    if (cfg.degrees.empty()) throw Error("config: degrees list is empty");
    for (int l : cfg.degrees)
      if (l < 1) throw Error("config: degrees must be >= 1");
  }
  if (cfg.method == Method::RbfFd && cfg.manifold.has_boundary())
    throw Error("config: kernel rows are exposed for closed manifolds only");
  if (cfg.problem == ProblemKind::Dirichlet && !cfg.manifold.has_boundary())
    throw Error("config: dirichlet problem needs a boundaried manifold");
  if (cfg.boundary != BoundaryMode::Detector &&
      cfg.problem != ProblemKind::Dirichlet)
    throw Error("config: boundary mode " + boundary_mode_name(cfg.boundary) +
                " needs problem = dirichlet");
  if (cfg.boundary == BoundaryMode::GivenBoundary &&
      cfg.manifold.family != Family::SemiTorus)
    throw Error("config: given_boundary mode is defined for the semitorus");
  if (cfg.method == Method::Vbdm) {
    if (cfg.vbdm_k1.size() != cfg.n_list.size() ||
        cfg.vbdm_k2.size() != cfg.n_list.size())
      throw Error("config: vbdm_k1 and vbdm_k2 must parallel the n list");
    for (std::size_t i = 0; i < cfg.n_list.size(); ++i) {
      if (cfg.vbdm_k2[i] < 2 || cfg.vbdm_k1[i] < cfg.vbdm_k2[i] ||
          cfg.vbdm_k1[i] > cfg.n_list[i])
        throw Error("config: need 2 <= vbdm_k2 <= vbdm_k1 <= n at entry " +
                    std::to_string(i));
    }
  }
}

namespace {

std::string fmt_double(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

std::string config_hash(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << cfg.manifold.name() << ";c0=" << fmt_double(cfg.manifold.c0)
     << ";R=" << fmt_double(cfg.manifold.R)
     << ";r=" << fmt_double(cfg.manifold.r) << ";n=";
  for (int n : cfg.n_list) os << n << ",";
  os << ";trials=" << cfg.trials << ";seed=" << cfg.seed << ";degrees=";
  for (int l : cfg.degrees) os << l << ",";
  os << ";k=" << cfg.k << ";kp=" << cfg.kp
     << ";method=" << method_name(cfg.method)
     << ";problem=" << problem_name(cfg.problem)
     << ";frames=" << frame_source_name(cfg.frames)
     << ";boundary=" << boundary_mode_name(cfg.boundary)
     << ";shift=" << fmt_double(cfg.shift)
     << ";rbf_s=" << fmt_double(cfg.rbf_s) << ";vk1=";
  for (int v : cfg.vbdm_k1) os << v << ",";
  os << ";vk2=";
  for (int v : cfg.vbdm_k2) os << v << ",";
  os << ";inv=" << (cfg.record_inv_norm ? 1 : 0);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(os.str())));
  return buf;
}

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

double to_double(const std::string& v, int line) {
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (v.empty() || end == nullptr || *end != '\0')
    throw Error("config line " + std::to_string(line) + ": bad number '" + v +
                "'");
  return x;
}

long long to_int(const std::string& v, int line) {
  char* end = nullptr;
  const long long x = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || end == nullptr || *end != '\0')
    throw Error("config line " + std::to_string(line) + ": bad integer '" + v +
                "'");
  return x;
}

std::vector<int> to_int_list(const std::string& v, int line) {
  if (v.size() < 2 || v.front() != '[' || v.back() != ']')
    throw Error("config line " + std::to_string(line) +
                ": lists use [a, b, c] syntax");
  std::vector<int> out;
  std::string body = v.substr(1, v.size() - 2);
  std::size_t pos = 0;
  while (pos <= body.size()) {
    const std::size_t comma = body.find(',', pos);
    const std::string item =
        trim(body.substr(pos, comma == std::string::npos ? std::string::npos
                                                         : comma - pos));
    if (!item.empty()) out.push_back(static_cast<int>(to_int(item, line)));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (out.empty())
    throw Error("config line " + std::to_string(line) + ": empty list");
  return out;
}

bool to_bool(const std::string& v, int line) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw Error("config line " + std::to_string(line) + ": bad boolean '" + v +
              "' (want true or false)");
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  std::vector<std::string> seen;
  bool have_manifold = false, have_n = false;
  while (std::getline(in, raw)) {
    ++line;
    const std::size_t hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    const std::string s = trim(raw);
    if (s.empty()) continue;
    const std::size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw Error("config line " + std::to_string(line) +
                  ": expected key = value");
    const std::string key = trim(s.substr(0, eq));
    const std::string val = trim(s.substr(eq + 1));
    if (key.empty() || val.empty())
      throw Error("config line " + std::to_string(line) +
                  ": expected key = value");
    if (std::find(seen.begin(), seen.end(), key) != seen.end())
      throw Error("config line " + std::to_string(line) + ": duplicate key '" +
                  key + "'");
    seen.push_back(key);

    if (key == "manifold") {
      cfg.manifold = parse_manifold_name(val);
      have_manifold = true;
    } else if (key == "n") {
      cfg.n_list = to_int_list(val, line);
      have_n = true;
    } else if (key == "trials") {
      cfg.trials = static_cast<int>(to_int(val, line));
    } else if (key == "seed") {
      cfg.seed = static_cast<std::uint64_t>(to_int(val, line));
    } else if (key == "degrees") {
      cfg.degrees = to_int_list(val, line);
    } else if (key == "k") {
      cfg.k = static_cast<int>(to_int(val, line));
    } else if (key == "kp") {
      cfg.kp = static_cast<int>(to_int(val, line));
    } else if (key == "method") {
      cfg.method = parse_method(val);
    } else if (key == "problem") {
      cfg.problem = parse_problem(val);
    } else if (key == "frames") {
      cfg.frames = parse_frame_source(val);
    } else if (key == "boundary") {
      cfg.boundary = parse_boundary_mode(val);
    } else if (key == "out") {
      cfg.out_dir = val;
    } else if (key == "shift") {
      cfg.shift = to_double(val, line);
    } else if (key == "rbf_s") {
      cfg.rbf_s = to_double(val, line);
    } else if (key == "vbdm_k1") {
      cfg.vbdm_k1 = to_int_list(val, line);
    } else if (key == "vbdm_k2") {
      cfg.vbdm_k2 = to_int_list(val, line);
    } else if (key == "record_inv_norm") {
      cfg.record_inv_norm = to_bool(val, line);
    } else {
      throw Error("config line " + std::to_string(line) + ": unknown key '" +
                  key + "'");
    }
  }
  if (!have_manifold) throw Error("config: missing required key 'manifold'");
  if (!have_n) throw Error("config: missing required key 'n'");
  validate_config(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::uint64_t cell_seed(std::uint64_t base, int n, int trial) {
  std::uint64_t z = base;
  z += 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(n) + 1);
  z += 0x94d049bb133111ebULL * (static_cast<std::uint64_t>(trial) + 1);
  z ^= z >> 30;
  z *= 0xbf58476d1ce4e5b9ULL;
  z ^= z >> 27;
  z *= 0x94d049bb133111ebULL;
  z ^= z >> 31;
  return z;
}

namespace {

// Sampled interior points plus ceil(sqrt(n)) boundary points per boundary
// circle, laid out uniformly in the boundary coordinate. The sampled points
// occupy rows [0, n); the ring follows.
PointCloud cloud_with_boundary_ring(const ManifoldSpec& spec, int n,
                                    std::uint64_t seed) {
  const PointCloud base = sample_manifold(spec, n, seed);
  const int m = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
  Matrix params(n + 2 * m, 2);
  params.topRows(n) = base.intrinsic;
  for (int j = 0; j < m; ++j) {
    const double t = 2.0 * M_PI * (j + 0.5) / m;
    params(n + j, 0) = t;
    params(n + j, 1) = 0.0;
    params(n + m + j, 0) = t;
    params(n + m + j, 1) = M_PI;
  }
  PointCloud out;
  out.intrinsic = params;
  out.ambient = embed_all(spec, params);
  out.spec = spec;
  out.intrinsic_dim = spec.dim();
  return out;
}

struct CellOutput {
  std::vector<RunRecord> records;
};

RunRecord blank_record(const ExperimentConfig& cfg, const std::string& hash,
                       int n, int trial, int degree) {
  RunRecord r;
  r.config_hash = hash;
  r.manifold = cfg.manifold.name();
  r.method = method_name(cfg.method);
  r.degree = degree;
  r.n = n;
  r.trial = trial;
  r.eps_mult = kNaN;
  r.fe = kNaN;
  r.ie = kNaN;
  r.c_max = kNaN;
  r.eps_star = kNaN;
  r.inv_norm = kNaN;
  r.status = "ok";
  return r;
}

double max_abs_diff(const Vector& a, const Vector& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

// One (N, trial) cell: sample once, then run every degree (least-squares
// methods) or a single pass (baselines).
CellOutput run_cell(const ExperimentConfig& cfg, const std::string& hash,
                    std::size_t n_idx, int trial) {
  const int n = cfg.n_list[n_idx];
  const bool is_gfdm =
      cfg.method == Method::GfdmRaw || cfg.method == Method::GfdmLp;
  const std::vector<int> degrees = is_gfdm ? cfg.degrees : std::vector<int>{0};

  CellOutput out;
  const auto t0 = std::chrono::steady_clock::now();
  auto stamp = [&t0](RunRecord& r) {
    r.wall_ms = std::chrono::duration<double, std::milli>(
                    std::chrono::steady_clock::now() - t0)
                    .count();
  };

  PointCloud cloud;
  NeighborTable knn;
  Frame frames;
  Vector u, lap;
  try {
    const std::uint64_t seed = cell_seed(cfg.seed, n, trial);
    cloud = cfg.boundary == BoundaryMode::GivenBoundary
                ? cloud_with_boundary_ring(cfg.manifold, n, seed)
                : sample_manifold(cfg.manifold, n, seed);
    knn = build_knn(cloud.ambient, cfg.k);
    if (cfg.frames == FrameSource::Analytic) {
      frames = analytic_frames(cloud);
    } else {
      const int kp = cfg.kp > 0 ? cfg.kp : default_kp(cloud.n_points());
      frames = estimate_tangent(cloud.ambient, cfg.manifold.dim(), kp).frame;
    }
    const Field field =
        cfg.manifold.dim() == 1 ? Field::SinTheta : Field::SinThetaSinPhi;
    u = field_values(field, cloud);
    lap = laplacian_values(field, cloud);
  } catch (const std::exception& e) {
    for (int degree : degrees) {
      RunRecord r = blank_record(cfg, hash, n, trial, degree);
      r.status = e.what();
      stamp(r);
      out.records.push_back(std::move(r));
    }
    return out;
  }

  for (int degree : degrees) {
    RunRecord rec = blank_record(cfg, hash, n, trial, degree);
    std::vector<RunRecord> extra;  // eps-sweep variants
    try {
      SparseOperator op;
      std::vector<RowWeights> rows;
      switch (cfg.method) {
        case Method::GfdmRaw:
        case Method::GfdmLp: {
          AssembleOptions opt;
          opt.degree = degree;
          // A closed solve puts every row into the linear system, so a
          // nonnegative raw diagonal cannot be set aside: first widen the
          // stencil until it straddles the sampling void, then let the
          // stabilizer repair whatever is left. The raw method stays plain
          // so its instability remains observable.
          const bool mend = cfg.method == Method::GfdmLp &&
                            cfg.problem == ProblemKind::Closed;
          if (mend) opt.widen_nonnegative = 8 * cfg.k;
          op = assemble_operator(cloud.ambient, knn, frames, opt, &rows);
          if (cfg.method == Method::GfdmLp) {
            StabilizeOptions sopt;
            sopt.repair_nonnegative = mend;
            StabilizeReport rep;
            op = stabilize_operator(rows, sopt, &rep);
            rec.c_max = rep.c_max;
            rec.c_rows_over_tol = rep.rows_over_tol;
            rec.fallbacks = rep.fallbacks;
          }
          break;
        }
        case Method::RbfFd: {
          RbfConfig rc;
          rc.s = cfg.rbf_s;
          rc.k = cfg.k;
          op = assemble_rbf_operator(cloud.ambient, knn, frames, rc);
          break;
        }
        case Method::Vbdm: {
          VbdmConfig vc;
          vc.k1 = cfg.vbdm_k1[n_idx];
          vc.k2 = cfg.vbdm_k2[n_idx];
          vc.d = cfg.manifold.dim();
          op = vbdm_laplacian(cloud.ambient, vc).op;
          break;
        }
      }
      rec.fe = forward_error(op, u, lap);

      if (cfg.record_inv_norm) {
        Eigen::SparseMatrix<double> eye(op.n_points(), op.n_points());
        eye.setIdentity();
        const Eigen::SparseMatrix<double> a = eye - op.to_sparse();
        rec.inv_norm = inv_norm_estimate(a);
      }

      if (cfg.problem == ProblemKind::Closed) {
        const Vector a = Vector::Constant(cloud.n_points(), cfg.shift);
        const Vector f = cfg.shift * u - lap;
        const Solution sol = solve_closed(op, a, f);
        rec.ie = max_abs_diff(sol.u, u);
      } else if (cfg.problem == ProblemKind::Dirichlet) {
        std::vector<int> keep;
        if (cfg.boundary == BoundaryMode::GivenBoundary) {
          keep.resize(static_cast<std::size_t>(n));
          for (int i = 0; i < n; ++i) keep[static_cast<std::size_t>(i)] = i;
        } else {
          // The row set comes from the sign detector on the raw
          // least-squares rows; graph-Laplacian rows reuse the same set.
          InteriorSplit split;
          if (is_gfdm) {
            split = detect_interior(rows, cloud);
          } else {
            AssembleOptions opt;
            opt.degree = 2;
            std::vector<RowWeights> drows;
            assemble_operator(cloud.ambient, knn, frames, opt, &drows);
            split = detect_interior(drows, cloud);
          }
          keep = split.interior;
          if (split.eps_star.has_value()) rec.eps_star = *split.eps_star;
        }
        const Solution sol = solve_dirichlet(op, keep, lap);
        rec.ie = max_abs_diff(sol.u, u);

        if (cfg.boundary == BoundaryMode::EpsSweep) {
          for (double mult : {0.5, 1.0, 2.0, 4.0}) {
            RunRecord er = rec;
            er.eps_mult = mult;
            try {
              const std::vector<int> xs =
                  restrict_eps(cloud, mult * rec.eps_star);
              const Solution es = solve_dirichlet(op, xs, lap);
              er.ie = max_abs_diff(es.u, u);
            } catch (const std::exception& e) {
              er.ie = kNaN;
              er.status = e.what();
            }
            extra.push_back(std::move(er));
          }
        }
      }
    } catch (const std::exception& e) {
      rec.status = e.what();
    }
    stamp(rec);
    out.records.push_back(std::move(rec));
    for (RunRecord& er : extra) {
      stamp(er);
      out.records.push_back(std::move(er));
    }
  }
  return out;
}

void sort_records(std::vector<RunRecord>& records) {
  std::sort(records.begin(), records.end(),
            [](const RunRecord& a, const RunRecord& b) {
              const double ea = std::isnan(a.eps_mult) ? -1.0 : a.eps_mult;
              const double eb = std::isnan(b.eps_mult) ? -1.0 : b.eps_mult;
              return std::tie(a.degree, a.n, a.trial, ea) <
                     std::tie(b.degree, b.n, b.trial, eb);
            });
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

const char* kCsvHeader =
    "config_hash,manifold,method,degree,n,trial,eps_mult,fe,ie,c_max,"
    "c_rows_over_tol,fallbacks,eps_star,inv_norm,wall_ms,status";

std::string record_line(const RunRecord& r) {
  std::ostringstream os;
  os << csv_field(r.config_hash) << ',' << csv_field(r.manifold) << ','
     << csv_field(r.method) << ',' << r.degree << ',' << r.n << ',' << r.trial
     << ',' << fmt_double(r.eps_mult) << ',' << fmt_double(r.fe) << ','
     << fmt_double(r.ie) << ',' << fmt_double(r.c_max) << ','
     << (r.c_rows_over_tol < 0 ? std::string()
                               : std::to_string(r.c_rows_over_tol))
     << ','
     << (r.fallbacks < 0 ? std::string() : std::to_string(r.fallbacks)) << ','
     << fmt_double(r.eps_star) << ',' << fmt_double(r.inv_norm) << ','
     << fmt_double(r.wall_ms) << ',' << csv_field(r.status);
  return os.str();
}

}  // namespace

std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg,
                                      int threads) {
  validate_config(cfg);
  const std::string hash = config_hash(cfg);
  std::filesystem::create_directories(cfg.out_dir);
  const std::string path = cfg.out_dir + "/records.csv";
  std::ofstream stream(path);
  if (!stream) throw Error("cannot write " + path);
  stream << kCsvHeader << "\n" << std::flush;

  std::vector<std::pair<std::size_t, int>> cells;
  for (std::size_t i = 0; i < cfg.n_list.size(); ++i)
    for (int t = 0; t < cfg.trials; ++t) cells.emplace_back(i, t);

  std::vector<RunRecord> all;
  std::mutex io;
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t c = next.fetch_add(1);
      if (c >= cells.size()) return;
      CellOutput cell =
          run_cell(cfg, hash, cells[c].first, cells[c].second);
      std::lock_guard<std::mutex> lock(io);
      for (RunRecord& r : cell.records) {
        stream << record_line(r) << "\n";
        all.push_back(std::move(r));
      }
      stream << std::flush;
    }
  };
  const int nw = std::max(1, std::min<int>(threads,
                                           static_cast<int>(cells.size())));
  if (nw == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(nw));
    for (int w = 0; w < nw; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  stream.close();

  sort_records(all);
  emit_csv(all, path);  // deterministic byte order once complete
  return all;
}

FitResult fit_slope(const std::vector<RunRecord>& records, Metric metric,
                    const FitOptions& opt) {
  // one series only: mixing methods, degrees, manifolds, or sweep variants
  // would average unrelated curves
  std::string method, manifold;
  int degree = 0;
  double eps_mult = -1.0;
  bool first = true;
  std::vector<std::pair<int, double>> values;
  for (const RunRecord& r : records) {
    if (r.status != "ok") continue;
    const double m = metric == Metric::Fe ? r.fe : r.ie;
    if (std::isnan(m)) continue;
    const double em = std::isnan(r.eps_mult) ? -1.0 : r.eps_mult;
    if (first) {
      method = r.method;
      manifold = r.manifold;
      degree = r.degree;
      eps_mult = em;
      first = false;
    } else if (r.method != method || r.manifold != manifold ||
               r.degree != degree || em != eps_mult) {
      throw Error("fit_slope: records mix more than one series");
    }
    values.emplace_back(r.n, m);
  }

  std::sort(values.begin(), values.end());
  std::vector<int> ns;
  std::vector<double> med;
  for (std::size_t i = 0; i < values.size();) {
    std::size_t j = i;
    std::vector<double> group;
    while (j < values.size() && values[j].first == values[i].first)
      group.push_back(values[j++].second);
    std::sort(group.begin(), group.end());
    const std::size_t g = group.size();
    ns.push_back(values[i].first);
    med.push_back(g % 2 == 1 ? group[g / 2]
                             : 0.5 * (group[g / 2 - 1] + group[g / 2]));
    i = j;
  }

  std::vector<bool> drop(ns.size(), false);
  if (opt.exclude_roundoff && !med.empty()) {
    std::size_t imin = 0;
    for (std::size_t j = 1; j < med.size(); ++j)
      if (med[j] < med[imin]) imin = j;
    for (std::size_t j = 0; j < med.size(); ++j) {
      if (med[j] < opt.floor) drop[j] = true;
      // past the sweep minimum, a point above its immediate predecessor is
      // climbing the h^{-2} round-off tail
      if (j > imin && med[j] > med[j - 1]) drop[j] = true;
    }
  }

  FitResult fit;
  double sx = 0.0, sy = 0.0;
  for (std::size_t j = 0; j < ns.size(); ++j) {
    if (drop[j]) continue;
    fit.n_used.push_back(ns[j]);
    sx += std::log(static_cast<double>(ns[j]));
    sy += std::log(med[j]);
  }
  fit.points_used = static_cast<int>(fit.n_used.size());
  if (fit.points_used < 3)
    throw Error("fit_slope: only " + std::to_string(fit.points_used) +
                " usable points (need 3)");
  const double mx = sx / fit.points_used, my = sy / fit.points_used;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t j = 0; j < ns.size(); ++j) {
    if (drop[j]) continue;
    const double dx = std::log(static_cast<double>(ns[j])) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(med[j]) - my);
  }
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  return fit;
}

std::vector<SummaryRow> summarize(const std::vector<RunRecord>& records) {
  std::vector<int> ns;
  for (const RunRecord& r : records)
    if (r.status == "ok" &&
        std::find(ns.begin(), ns.end(), r.n) == ns.end())
      ns.push_back(r.n);
  std::sort(ns.begin(), ns.end());

  auto stats = [](std::vector<double> v, double* mean, double* sd,
                  double* median) {
    if (v.empty()) {
      *mean = *sd = *median = kNaN;
      return;
    }
    double s = 0.0;
    for (double x : v) s += x;
    *mean = s / static_cast<double>(v.size());
    double q = 0.0;
    for (double x : v) q += (x - *mean) * (x - *mean);
    *sd = v.size() > 1 ? std::sqrt(q / static_cast<double>(v.size() - 1)) : 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t g = v.size();
    *median =
        g % 2 == 1 ? v[g / 2] : 0.5 * (v[g / 2 - 1] + v[g / 2]);
  };

  std::vector<SummaryRow> out;
  for (int n : ns) {
    SummaryRow row;
    row.n = n;
    std::vector<double> fes, ies;
    for (const RunRecord& r : records) {
      if (r.status != "ok" || r.n != n) continue;
      ++row.count;
      if (!std::isnan(r.fe)) fes.push_back(r.fe);
      if (!std::isnan(r.ie)) ies.push_back(r.ie);
    }
    stats(fes, &row.fe_mean, &row.fe_std, &row.fe_median);
    stats(ies, &row.ie_mean, &row.ie_std, &row.ie_median);
    out.push_back(row);
  }
  return out;
}

void emit_csv(const std::vector<RunRecord>& records, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << kCsvHeader << "\n";
  for (const RunRecord& r : records) out << record_line(r) << "\n";
  if (!out) throw Error("failed writing " + path);
}

void emit_summary_csv(const std::vector<SummaryRow>& rows,
                      const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << "n,count,fe_mean,fe_std,fe_median,ie_mean,ie_std,ie_median\n";
  for (const SummaryRow& r : rows) {
    out << r.n << ',' << r.count << ',' << fmt_double(r.fe_mean) << ','
        << fmt_double(r.fe_std) << ',' << fmt_double(r.fe_median) << ','
        << fmt_double(r.ie_mean) << ',' << fmt_double(r.ie_std) << ','
        << fmt_double(r.ie_median) << "\n";
  }
}

namespace {

// RFC-4180 reader: quoted fields, doubled quotes, embedded separators.
std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"' && field.empty()) {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (any || !field.empty()) {
        row.push_back(std::move(field));
        field.clear();
        rows.push_back(std::move(row));
        row.clear();
        any = false;
      }
    } else {
      field += c;
      any = true;
    }
  }
  if (quoted) throw Error("csv: unterminated quoted field");
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

double field_double(const std::string& s) {
  if (s.empty()) return kNaN;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == nullptr || *end != '\0') throw Error("csv: bad number '" + s + "'");
  return v;
}

int field_count(const std::string& s) {
  if (s.empty()) return -1;
  return static_cast<int>(field_double(s));
}

}  // namespace

std::vector<RunRecord> load_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  const auto rows = parse_csv(buf.str());
  if (rows.empty() || rows[0] != parse_csv(kCsvHeader)[0])
    throw Error("csv: unexpected header in " + path);
  std::vector<RunRecord> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i];
    if (f.size() != 16)
      throw Error("csv: row " + std::to_string(i + 1) + " has " +
                  std::to_string(f.size()) + " fields, want 16");
    RunRecord r;
    r.config_hash = f[0];
    r.manifold = f[1];
    r.method = f[2];
    r.degree = field_count(f[3]);
    r.n = field_count(f[4]);
    r.trial = field_count(f[5]);
    r.eps_mult = field_double(f[6]);
    r.fe = field_double(f[7]);
    r.ie = field_double(f[8]);
    r.c_max = field_double(f[9]);
    r.c_rows_over_tol = field_count(f[10]);
    r.fallbacks = field_count(f[11]);
    r.eps_star = field_double(f[12]);
    r.inv_norm = field_double(f[13]);
    r.wall_ms = field_double(f[14]);
    r.status = f[15];
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace gfdm
