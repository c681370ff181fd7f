// Command-line front end: sample clouds, assemble and stabilize operators,
// solve the manufactured problems, and drive full convergence sweeps.
#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "gfdm/harness.hpp"
#include "gfdm/pde.hpp"
#include "gfdm/stabilize.hpp"
#include "gfdm/stencil.hpp"

using namespace gfdm;

namespace {

// Cloud files store ambient coordinates; the intrinsic sidecar restores the
// parameters so analytic frames and manufactured fields stay available.
PointCloud load_cloud(const std::string& cloud_path,
                      const std::string& params_path,
                      const std::string& manifold_name) {
  const ManifoldSpec spec = parse_manifold_name(manifold_name);
  PointCloud cloud = load_xyz(cloud_path, spec.dim());
  cloud.spec = spec;
  if (!params_path.empty()) {
    const PointCloud params = load_xyz(params_path, spec.dim());
    if (params.n_points() != cloud.n_points())
      throw Error("parameter sidecar has " +
                  std::to_string(params.n_points()) + " rows, cloud has " +
                  std::to_string(cloud.n_points()));
    cloud.intrinsic = params.ambient;
  }
  return cloud;
}

Frame make_frames(const PointCloud& cloud, const std::string& source, int kp) {
  if (source == "analytic") {
    if (!cloud.has_intrinsic())
      throw Error("analytic frames need the parameter sidecar (--params)");
    return analytic_frames(cloud);
  }
  if (source != "estimated")
    throw Error("unknown frame source '" + source +
                "' (want analytic or estimated)");
  const int use_kp = kp > 0 ? kp : default_kp(cloud.n_points());
  return estimate_tangent(cloud.ambient, cloud.spec->dim(), use_kp).frame;
}

struct SeriesKey {
  std::string manifold, method;
  int degree = 0;
  double eps_mult = -1.0;
  bool operator<(const SeriesKey& o) const {
    return std::tie(manifold, method, degree, eps_mult) <
           std::tie(o.manifold, o.method, o.degree, o.eps_mult);
  }
};

std::map<SeriesKey, std::vector<RunRecord>> split_series(
    const std::vector<RunRecord>& records) {
  std::map<SeriesKey, std::vector<RunRecord>> out;
  for (const RunRecord& r : records) {
    SeriesKey key{r.manifold, r.method, r.degree,
                  std::isnan(r.eps_mult) ? -1.0 : r.eps_mult};
    out[key].push_back(r);
  }
  return out;
}

std::string series_tag(const SeriesKey& key) {
  std::string tag = key.manifold + "_" + key.method;
  if (key.degree > 0) tag += "_d" + std::to_string(key.degree);
  if (key.eps_mult >= 0.0) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "_eps%g", key.eps_mult);
    tag += buf;
  }
  return tag;
}

void print_series_fits(const std::vector<RunRecord>& records) {
  for (const auto& [key, recs] : split_series(records)) {
    for (Metric metric : {Metric::Fe, Metric::Ie}) {
      const char* name = metric == Metric::Fe ? "fe" : "ie";
      try {
        const FitResult fit = fit_slope(recs, metric);
        std::printf("%-40s %s slope %+.3f  (%d sizes)\n",
                    series_tag(key).c_str(), name, fit.slope,
                    fit.points_used);
      } catch (const Error& e) {
        std::printf("%-40s %s slope n/a: %s\n", series_tag(key).c_str(), name,
                    e.what());
      }
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"meshfree Laplace-Beltrami operators on sampled manifolds"};
  app.require_subcommand(1);

  // sample
  std::string sm_manifold = "ellipse", sm_out = "cloud.xyz";
  int sm_n = 400;
  std::uint64_t sm_seed = 1;
  CLI::App* sample = app.add_subcommand("sample", "draw a uniform cloud");
  sample->add_option("--manifold", sm_manifold,
                     "ellipse, torus<2q+1>, or semitorus");
  sample->add_option("--n", sm_n, "number of points")->required();
  sample->add_option("--seed", sm_seed, "rng seed");
  sample->add_option("--out", sm_out,
                     "cloud file; parameters go to <out>.params");

  // shared assembly flags
  struct AsmFlags {
    std::string cloud, params, manifold = "ellipse", frames = "analytic";
    std::string out = "operator.txt";
    int k = 21, degree = 2, kp = 0, widen = 0;
  };
  auto add_asm_flags = [](CLI::App* cmd, AsmFlags& f) {
    cmd->add_option("--cloud", f.cloud, "cloud file")->required();
    cmd->add_option("--params", f.params, "intrinsic parameter sidecar");
    cmd->add_option("--manifold", f.manifold,
                    "ellipse, torus<2q+1>, or semitorus");
    cmd->add_option("--k", f.k, "stencil size");
    cmd->add_option("--degree", f.degree, "polynomial degree");
    cmd->add_option("--frames", f.frames, "analytic or estimated");
    cmd->add_option("--kp", f.kp, "tangent-estimation neighbors (0 = auto)");
    cmd->add_option("--widen-nonnegative", f.widen,
                    "max stencil size when widening nonnegative-diagonal "
                    "rows (0 = off; for closed-manifold solves)");
    cmd->add_option("--out", f.out, "operator file");
  };

  AsmFlags af;
  CLI::App* assemble =
      app.add_subcommand("assemble", "least-squares Laplacian rows");
  add_asm_flags(assemble, af);

  AsmFlags sf;
  std::string st_report;
  bool st_repair = false;
  CLI::App* stabilize = app.add_subcommand(
      "stabilize", "assemble, then enforce sign structure row by row");
  add_asm_flags(stabilize, sf);
  stabilize->add_option("--report", st_report,
                        "per-row relaxation levels as CSV");
  stabilize->add_flag("--repair-nonnegative", st_repair,
                      "solve nonnegative-diagonal rows too (closed solves)");

  // solve
  std::string sv_cloud, sv_params, sv_manifold = "ellipse", sv_op,
              sv_problem = "closed", sv_out = "solution.txt";
  double sv_shift = 1.0;
  CLI::App* solve =
      app.add_subcommand("solve", "manufactured problem on a saved operator");
  solve->add_option("--cloud", sv_cloud, "cloud file")->required();
  solve->add_option("--params", sv_params, "intrinsic parameter sidecar")
      ->required();
  solve->add_option("--manifold", sv_manifold,
                    "ellipse, torus<2q+1>, or semitorus");
  solve->add_option("--op", sv_op, "operator file")->required();
  solve->add_option("--problem", sv_problem, "closed or dirichlet");
  solve->add_option("--shift", sv_shift, "reaction constant (closed)");
  solve->add_option("--out", sv_out, "solution file");

  // sweep
  std::string sw_config, sw_out;
  int sw_threads = 1;
  std::uint64_t sw_seed = 0;
  bool sw_have_seed = false;
  CLI::App* sweep = app.add_subcommand("sweep", "run a full experiment grid");
  sweep->add_option("--config", sw_config, "key = value experiment file")
      ->required();
  sweep->add_option("--out", sw_out, "override the output directory");
  sweep->add_option("--threads", sw_threads, "worker threads");
  sweep->add_option("--seed", sw_seed, "override the base seed")
      ->each([&](const std::string&) { sw_have_seed = true; });

  // report
  std::string rp_records, rp_out;
  CLI::App* report =
      app.add_subcommand("report", "summaries and fitted slopes");
  report->add_option("--records", rp_records, "records CSV from a sweep")
      ->required();
  report->add_option("--out", rp_out,
                     "summary CSV (single series; default: alongside input)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sample) {
      const ManifoldSpec spec = parse_manifold_name(sm_manifold);
      const PointCloud cloud = sample_manifold(spec, sm_n, sm_seed);
      save_xyz(sm_out, cloud.ambient);
      save_xyz(sm_out + ".params", cloud.intrinsic);
      std::printf("%d points on %s -> %s (+.params)\n", cloud.n_points(),
                  spec.name().c_str(), sm_out.c_str());
    } else if (*assemble || *stabilize) {
      AsmFlags& f = *assemble ? af : sf;
      const PointCloud cloud = load_cloud(f.cloud, f.params, f.manifold);
      const NeighborTable knn = build_knn(cloud.ambient, f.k);
      const Frame frames = make_frames(cloud, f.frames, f.kp);
      AssembleOptions opt;
      opt.degree = f.degree;
      opt.widen_nonnegative = f.widen;
      std::vector<RowWeights> rows;
      SparseOperator op =
          assemble_operator(cloud.ambient, knn, frames, opt, &rows);
      if (*stabilize) {
        StabilizeOptions sopt;
        sopt.repair_nonnegative = st_repair;
        StabilizeReport rep;
        op = stabilize_operator(rows, sopt, &rep);
        std::printf("stabilized %d/%d rows, c_max %.3e, %d over tolerance, "
                    "%d fallbacks\n",
                    rep.rows_stabilized, rep.rows_total, rep.c_max,
                    rep.rows_over_tol, rep.fallbacks);
        if (!st_report.empty()) save_stabilize_report(st_report, rep);
      }
      save_operator(f.out, op);
      std::printf("operator %d x %d (K = %d) -> %s, constant residual %.3e\n",
                  op.n_points(), op.n_points(), op.k(), f.out.c_str(),
                  op.const_residual);
    } else if (*solve) {
      const PointCloud cloud = load_cloud(sv_cloud, sv_params, sv_manifold);
      if (!cloud.has_intrinsic())
        throw Error("solve needs the parameter sidecar to manufacture data");
      const SparseOperator op = load_operator(sv_op);
      if (op.n_points() != cloud.n_points())
        throw Error("operator size does not match the cloud");
      const Field field = cloud.spec->dim() == 1 ? Field::SinTheta
                                                 : Field::SinThetaSinPhi;
      const Vector u = field_values(field, cloud);
      const Vector lap = laplacian_values(field, cloud);
      Solution sol;
      if (sv_problem == "closed") {
        sol = solve_closed(op, Vector::Constant(cloud.n_points(), sv_shift),
                           sv_shift * u - lap);
      } else if (sv_problem == "dirichlet") {
        const InteriorSplit split = detect_interior(op, cloud);
        std::printf("detector: %zu interior, %zu flagged\n",
                    split.interior.size(), split.flagged.size());
        sol = solve_dirichlet(op, split.interior, lap);
      } else {
        throw Error("unknown problem '" + sv_problem +
                    "' (want closed or dirichlet)");
      }
      const double ie = (sol.u - u).cwiseAbs().maxCoeff();
      save_solution(sv_out, cloud, sol.u, &u);
      std::printf("max error %.6e, residual %.3e (%d refinements) -> %s\n",
                  ie, sol.residual, sol.refine_steps, sv_out.c_str());
    } else if (*sweep) {
      ExperimentConfig cfg = load_config(sw_config);
      if (!sw_out.empty()) cfg.out_dir = sw_out;
      if (sw_have_seed) cfg.seed = sw_seed;
      const std::vector<RunRecord> records = run_experiment(cfg, sw_threads);
      int failed = 0;
      for (const RunRecord& r : records)
        if (r.status != "ok") {
          ++failed;
          std::fprintf(stderr, "cell n=%d trial=%d degree=%d: %s\n", r.n,
                       r.trial, r.degree, r.status.c_str());
        }
      std::printf("%zu records (%d failed) -> %s/records.csv\n",
                  records.size(), failed, cfg.out_dir.c_str());
      print_series_fits(records);
      return failed == 0 ? 0 : 1;
    } else if (*report) {
      const std::vector<RunRecord> records = load_records(rp_records);
      const auto series = split_series(records);
      if (series.empty()) throw Error("no records in " + rp_records);
      const std::string stem =
          rp_records.substr(0, rp_records.find_last_of('/') + 1);
      for (const auto& [key, recs] : series) {
        const std::string path =
            !rp_out.empty() && series.size() == 1
                ? rp_out
                : stem + "summary_" + series_tag(key) + ".csv";
        emit_summary_csv(summarize(recs), path);
        std::printf("%s -> %s\n", series_tag(key).c_str(), path.c_str());
      }
      print_series_fits(records);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
