#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gfdm/geometry.hpp"

namespace gfdm {

enum class Method { GfdmRaw, GfdmLp, RbfFd, Vbdm };
enum class ProblemKind { Consistency, Closed, Dirichlet };
enum class FrameSource { Analytic, Estimated };
enum class BoundaryMode { Detector, EpsSweep, GivenBoundary };

std::string method_name(Method m);
std::string problem_name(ProblemKind p);
std::string frame_source_name(FrameSource f);
std::string boundary_mode_name(BoundaryMode b);
Method parse_method(const std::string& s);
ProblemKind parse_problem(const std::string& s);
FrameSource parse_frame_source(const std::string& s);
BoundaryMode parse_boundary_mode(const std::string& s);

// "ellipse", "semitorus", or "torus<2q+1>" (odd ambient dimension >= 5)
ManifoldSpec parse_manifold_name(const std::string& s);

// One sweep: a manifold, a list of cloud sizes, trial repetitions, and the
// operator/problem combination to run at each (size, trial) cell. The test
// field is implied by the manifold dimension (sin theta on curves,
// sin theta sin phi on surfaces).
struct ExperimentConfig {
  ManifoldSpec manifold;
  std::vector<int> n_list;
  int trials = 1;
  std::uint64_t seed = 1;
  std::vector<int> degrees = {2};  // polynomial degrees, least-squares only
  int k = 21;                      // stencil size
  int kp = 0;                      // tangent-estimation neighbors; 0 = 2 sqrt(N)
  Method method = Method::GfdmLp;
  ProblemKind problem = ProblemKind::Consistency;
  FrameSource frames = FrameSource::Analytic;
  BoundaryMode boundary = BoundaryMode::Detector;
  std::string out_dir = ".";
  double shift = 1.0;   // reaction constant a in (a - L)U = f
  double rbf_s = 0.5;   // kernel shape parameter
  std::vector<int> vbdm_k1;  // graph neighbors, parallel to n_list
  std::vector<int> vbdm_k2;  // density neighbors, parallel to n_list
  bool record_inv_norm = false;  // estimate ||(I - L)^{-1}||_inf per cell
};

// Throws on any inconsistent combination (sizes vs stencil, boundary modes
// on closed manifolds, kernel rows on boundaried ones, ...).
void validate_config(const ExperimentConfig& cfg);

// 16-hex-digit digest of the scientific fields (everything except out_dir),
// stable across runs and platforms.
std::string config_hash(const ExperimentConfig& cfg);

// Plain-text key = value configuration, one pair per line, '#' comments,
// lists in brackets: n = [800, 1600]. Unknown keys are errors. See the
// README for the full key table.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// One experiment cell (or one eps-sweep variant of a cell). Unset numeric
// fields are NaN (empty CSV fields); unset counters are -1.
struct RunRecord {
  std::string config_hash;
  std::string manifold;
  std::string method;
  int degree = 0;    // 0 for the kernel and graph baselines
  int n = 0;         // sampled cloud size (boundary ring excluded)
  int trial = 0;
  double eps_mult = 0.0;  // eps-sweep multiplier; NaN on non-sweep rows
  double fe = 0.0;
  double ie = 0.0;
  double c_max = 0.0;         // stabilizer summary, NaN when not run
  int c_rows_over_tol = -1;
  int fallbacks = -1;
  double eps_star = 0.0;      // realized detector depth, NaN when n/a
  double inv_norm = 0.0;      // ||(I - L)^{-1}||_inf estimate, NaN when off
  double wall_ms = 0.0;
  std::string status;         // "ok" or the failure message
};

// Runs every (N, trial, degree) cell, appending records to
// <out_dir>/records.csv as they complete and rewriting the file in sorted
// order at the end so the bytes are deterministic regardless of thread
// timing (wall_ms excepted). Cell failures become records with the error
// text in `status`; the sweep continues.
std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg,
                                      int threads = 1);

// Least-squares fit of log(median metric over trials) against log N.
enum class Metric { Fe, Ie };

struct FitOptions {
  bool exclude_roundoff = true;
  double floor = 1e-9;  // metric values below this are round-off noise
};

struct FitResult {
  double slope = 0.0;
  double intercept = 0.0;       // in log space
  int points_used = 0;
  std::vector<int> n_used;      // cloud sizes that survived exclusion
};

// The records must form a single series (one method, degree, and eps
// multiplier); mixed series are an error, as are fewer than 3 usable
// points. Exclusion drops metrics below `floor` and, past the sweep
// minimum, any point sitting above its immediate predecessor (the
// round-off tail grows like h^{-2}).
FitResult fit_slope(const std::vector<RunRecord>& records, Metric metric,
                    const FitOptions& opt = {});

// Per-size aggregates across trials of one series, for plotting with
// error bars.
struct SummaryRow {
  int n = 0;
  int count = 0;
  double fe_mean = 0.0, fe_std = 0.0, fe_median = 0.0;
  double ie_mean = 0.0, ie_std = 0.0, ie_median = 0.0;
};

std::vector<SummaryRow> summarize(const std::vector<RunRecord>& records);

// RFC-4180 CSV with a fixed header; reals carry 17 significant digits so
// a round trip is bit-exact. NaN fields are written empty.
void emit_csv(const std::vector<RunRecord>& records, const std::string& path);
std::vector<RunRecord> load_records(const std::string& path);
void emit_summary_csv(const std::vector<SummaryRow>& rows,
                      const std::string& path);

// Deterministic per-cell seed: a splitmix-style hash of the base seed and
// the cell coordinates, so cells are independent of sweep order.
std::uint64_t cell_seed(std::uint64_t base, int n, int trial);

}  // namespace gfdm
