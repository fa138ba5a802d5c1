#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "gmmscape/gmm_io.hpp"
#include "gmmscape/inference.hpp"
#include "gmmscape/ingest.hpp"
#include "gmmscape/occupancy.hpp"
#include "gmmscape/ply_io.hpp"
#include "gmmscape/pose_graph.hpp"
#include "gmmscape/registration.hpp"
#include "gmmscape/sogmm.hpp"
#include "gmmscape/synthetic.hpp"

namespace fs = std::filesystem;
using namespace gmmscape;

namespace {

double elapsed_seconds(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
      .count();
}

std::uint64_t resolve_seed(std::int64_t flag_value) {
  if (flag_value >= 0) return static_cast<std::uint64_t>(flag_value);
  std::random_device rd;
  const std::uint64_t seed =
      (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  std::cout << "seed: " << seed << "\n";
  return seed;
}

void apply_threads(int flag_value) {
  if (flag_value > 0) {
    set_num_threads(flag_value);
    return;
  }
  if (const char* env = std::getenv("GMMSCAPE_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) set_num_threads(n);
  }
}

CameraIntrinsics load_intrinsics(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed intrinsics JSON: " + std::string(e.what()));
  }
  CameraIntrinsics intr;
  try {
    intr.fx = j.at("fx").get<double>();
    intr.fy = j.at("fy").get<double>();
    intr.cx = j.at("cx").get<double>();
    intr.cy = j.at("cy").get<double>();
    intr.depth_scale = j.value("depth_scale", 1000.0);
    intr.width = j.at("width").get<int>();
    intr.height = j.at("height").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad intrinsics fields: " + std::string(e.what()));
  }
  intr.validate();
  return intr;
}

void save_intrinsics(const CameraIntrinsics& intr, const std::string& path) {
  nlohmann::json j{{"fx", intr.fx},   {"fy", intr.fy},
                   {"cx", intr.cx},   {"cy", intr.cy},
                   {"depth_scale", intr.depth_scale},
                   {"width", intr.width}, {"height", intr.height}};
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << j.dump(2) << "\n";
}

void save_transform(const RigidTransform& t, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os.precision(17);
  const Eigen::Matrix4d m = t.matrix();
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) os << m(r, c) << (c == 3 ? "\n" : " ");
  }
}

RigidTransform load_transform(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  Eigen::Matrix4d m;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      if (!(is >> m(r, c))) throw IoError(path + ": expected 16 numbers");
    }
  }
  if ((m.row(3) - Eigen::RowVector4d(0, 0, 0, 1)).norm() > 1e-9) {
    throw std::invalid_argument("transform last row must be 0 0 0 1");
  }
  RigidTransform t = RigidTransform::from_matrix(m);
  if (!t.is_valid(1e-6)) {
    throw std::invalid_argument("transform rotation is not orthonormal");
  }
  t.orthonormalize();
  return t;
}

Gmm4 load_model_any(const std::string& path, const std::string& format) {
  if (format == "json") return load_gmm_json(path);
  return load_gmm(path);
}

struct FitFlags {
  std::string depth, intensity, intrinsics, out;
  std::string format = "binary";
  double bandwidth = 0.015;
  int decimate_factor = 1;
  double depth_scale = 0.0;  // 0: take from intrinsics file
  std::int64_t seed = -1;
  int max_iters = 100;
  double ll_tol = 1e-5;
  double cov_reg = 1e-6;
};

FitResult run_fit(const FitFlags& flags, bool print) {
  CameraIntrinsics intr = load_intrinsics(flags.intrinsics);
  if (flags.depth_scale > 0.0) intr.depth_scale = flags.depth_scale;
  Image depth = load_image(flags.depth);
  Image inten = load_image(flags.intensity);
  if (flags.decimate_factor > 1) {
    depth = decimate(depth, flags.decimate_factor);
    inten = decimate(inten, flags.decimate_factor);
    intr = intr.decimated(flags.decimate_factor);
  }
  const PointCloud4D cloud = image_pair_to_cloud(depth, inten, intr);

  EmParams em;
  em.max_iters = flags.max_iters;
  em.ll_rel_tol = flags.ll_tol;
  em.cov_reg = flags.cov_reg;
  em.seed = resolve_seed(flags.seed);

  const auto start = std::chrono::steady_clock::now();
  FitResult result = fit(cloud, flags.bandwidth, em);
  const double secs = elapsed_seconds(start);

  if (!flags.out.empty()) {
    if (flags.format == "json") {
      save_gmm_json(result.model, flags.out);
    } else {
      save_gmm(result.model, flags.out);
    }
  }
  if (print) {
    std::cout << "points: " << cloud.size() << "\n"
              << "components: " << result.model.components() << "\n"
              << "fit_seconds: " << secs << "\n"
              << "memory_bytes: " << memory_footprint(result.model) << "\n"
              << "log_likelihood: " << result.final_log_likelihood << "\n"
              << "em_iterations: " << result.em_iterations << "\n";
  }
  return result;
}

int run_bench(const std::string& depth_path, const std::string& inten_path,
              const std::string& intr_path, bool synthetic, double bw_min,
              double bw_max, int bw_count, std::vector<int> decimations,
              int reps, std::int64_t seed_flag, const std::string& out_csv) {
  if (bw_count < 1 || reps < 1 || bw_min <= 0 || bw_max < bw_min) {
    throw std::invalid_argument("bad bench configuration");
  }
  Image depth, inten;
  CameraIntrinsics intr;
  if (synthetic) {
    const SyntheticFrame frame = make_synthetic_frame(640, 480);
    depth = frame.depth;
    inten = frame.intensity;
    intr = frame.intrinsics;
  } else {
    depth = load_image(depth_path);
    inten = load_image(inten_path);
    intr = load_intrinsics(intr_path);
  }
  const std::uint64_t seed = resolve_seed(seed_flag);

  std::ofstream os(out_csv);
  if (!os) throw IoError("cannot open " + out_csv + " for writing");
  os << "image_size,bandwidth,mean_seconds,std_seconds,M\n";

  struct Row {
    int factor;
    double bandwidth;
    double mean;
  };
  std::vector<Row> rows;

  for (const int factor : decimations) {
    const Image d = decimate(depth, factor);
    const Image g = decimate(inten, factor);
    const CameraIntrinsics di = intr.decimated(factor);
    const PointCloud4D cloud = image_pair_to_cloud(d, g, di);
    for (int bi = 0; bi < bw_count; ++bi) {
      const double bw =
          bw_count == 1
              ? bw_min
              : bw_min + (bw_max - bw_min) * bi / (bw_count - 1.0);
      std::vector<double> secs(static_cast<size_t>(reps));
      int m = 0;
      for (int rep = 0; rep < reps; ++rep) {
        EmParams em;
        em.seed = seed + static_cast<std::uint64_t>(rep);
        const auto start = std::chrono::steady_clock::now();
        const FitResult r = fit(cloud, bw, em);
        secs[static_cast<size_t>(rep)] = elapsed_seconds(start);
        if (rep == 0) m = r.model.components();
      }
      double mean = 0.0;
      for (const double s : secs) mean += s;
      mean /= reps;
      double var = 0.0;
      for (const double s : secs) var += (s - mean) * (s - mean);
      const double sd = std::sqrt(var / reps);
      os << d.width << "x" << d.height << "," << bw << "," << mean << ","
         << sd << "," << m << "\n";
      std::cout << d.width << "x" << d.height << " bw=" << bw
                << " mean=" << mean << "s sd=" << sd << " M=" << m << "\n";
      rows.push_back({factor, bw, mean});
    }
  }

  // Timing monotonicity report: at a fixed bandwidth, more decimation means
  // fewer points and should not be slower. Reported only.
  int violations = 0;
  for (const auto& a : rows) {
    for (const auto& b : rows) {
      if (a.bandwidth == b.bandwidth && a.factor < b.factor &&
          a.mean < b.mean) {
        ++violations;
        std::cout << "monotonicity violation: bw=" << a.bandwidth
                  << " factor " << b.factor << " slower than factor "
                  << a.factor << "\n";
      }
    }
  }
  std::cout << "monotonicity_violations: " << violations << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gmmscape: compact generative point-cloud perception"};
  app.set_config("--config");
  app.require_subcommand(1);
  app.fallthrough();

  int threads = 0;
  app.add_option("--threads", threads, "worker threads (default: hardware)");
  app.parse_complete_callback([&] { apply_threads(threads); });

  // ---- synth ----
  auto* synth = app.add_subcommand("synth", "write a synthetic frame");
  int synth_w = 640, synth_h = 480;
  double synth_scale = 1000.0;
  std::string synth_depth = "depth.pgm", synth_inten = "intensity.pgm",
              synth_intr = "intrinsics.json";
  synth->add_option("--width", synth_w);
  synth->add_option("--height", synth_h);
  synth->add_option("--depth-scale", synth_scale);
  synth->add_option("--out-depth", synth_depth);
  synth->add_option("--out-intensity", synth_inten);
  synth->add_option("--out-intrinsics", synth_intr);
  synth->callback([&] {
    const SyntheticFrame frame = make_synthetic_frame(synth_w, synth_h,
                                                      synth_scale);
    save_pgm(frame.depth, synth_depth);
    save_pgm(frame.intensity, synth_inten);
    save_intrinsics(frame.intrinsics, synth_intr);
    std::cout << "wrote " << synth_depth << ", " << synth_inten << ", "
              << synth_intr << "\n";
  });

  // ---- fit ----
  auto* fitc = app.add_subcommand("fit", "fit a model to a frame");
  FitFlags ff;
  fitc->add_option("--depth", ff.depth)->required();
  fitc->add_option("--intensity", ff.intensity)->required();
  fitc->add_option("--intrinsics", ff.intrinsics)->required();
  fitc->add_option("--bandwidth", ff.bandwidth)
      ->check(CLI::PositiveNumber.description("> 0"));
  fitc->add_option("--decimate", ff.decimate_factor);
  fitc->add_option("--depth-scale", ff.depth_scale);
  fitc->add_option("--out", ff.out)->required();
  fitc->add_option("--format", ff.format)
      ->check(CLI::IsMember({"binary", "json"}));
  fitc->add_option("--seed", ff.seed);
  fitc->add_option("--max-iters", ff.max_iters);
  fitc->add_option("--ll-tol", ff.ll_tol);
  fitc->add_option("--cov-reg", ff.cov_reg);
  fitc->callback([&] { run_fit(ff, true); });

  // ---- sample ----
  auto* sample = app.add_subcommand("sample", "resample points from a model");
  std::string sample_model, sample_out;
  std::string sample_format = "binary";
  std::int64_t sample_n = 307200, sample_seed = -1;
  bool sample_ascii = false;
  sample->add_option("--model", sample_model)->required();
  sample->add_option("--n", sample_n)->check(CLI::PositiveNumber);
  sample->add_option("--out", sample_out)->required();
  sample->add_option("--seed", sample_seed);
  sample->add_option("--format", sample_format)
      ->check(CLI::IsMember({"binary", "json"}));
  sample->add_flag("--ascii", sample_ascii, "ASCII PLY output");
  sample->callback([&] {
    const Gmm4 model = load_model_any(sample_model, sample_format);
    const std::uint64_t seed = resolve_seed(sample_seed);
    const PointCloud4D cloud = joint_dist_sample(model, sample_n, seed);
    save_ply(cloud, sample_out, !sample_ascii);
    std::cout << "wrote " << sample_out << " (" << cloud.size()
              << " vertices)\n";
  });

  // ---- infer ----
  auto* infer = app.add_subcommand("infer",
                                   "conditional intensity at 3D locations");
  std::string infer_model, infer_locs, infer_out;
  std::string infer_format = "binary";
  bool infer_noclamp = false, infer_ascii = false;
  infer->add_option("--model", infer_model)->required();
  infer->add_option("--locs", infer_locs)->required();
  infer->add_option("--out", infer_out)->required();
  infer->add_option("--format", infer_format)
      ->check(CLI::IsMember({"binary", "json"}));
  infer->add_flag("--no-clamp", infer_noclamp, "raw expected intensities");
  infer->add_flag("--ascii", infer_ascii, "ASCII PLY output");
  infer->callback([&] {
    const Gmm4 model = load_model_any(infer_model, infer_format);
    const PlyCloud locs = load_ply(infer_locs);
    const ConditionalResult cond = color_conditional(
        model, locs.cloud.points.leftCols<3>(), !infer_noclamp);
    PointCloud4D out;
    out.points.resize(locs.cloud.size(), 4);
    out.points.leftCols<3>() = locs.cloud.points.leftCols<3>();
    out.points.col(3) = cond.expected_intensity;
    save_ply(out, infer_out, !infer_ascii, &cond.variance);
    std::cout << "wrote " << infer_out << " (" << out.size()
              << " vertices)\n";
  });

  // ---- register ----
  auto* reg = app.add_subcommand("register", "align two models on SE(3)");
  std::string reg_source, reg_target, reg_variant = "hybrid", reg_init,
              reg_out;
  std::string reg_format = "binary";
  reg->add_option("--source", reg_source)->required();
  reg->add_option("--target", reg_target)->required();
  reg->add_option("--variant", reg_variant)
      ->check(CLI::IsMember({"anisotropic", "isoplanar", "hybrid"}));
  reg->add_option("--init", reg_init, "4x4 transform text (default identity)");
  reg->add_option("--out", reg_out)->required();
  reg->add_option("--format", reg_format)
      ->check(CLI::IsMember({"binary", "json"}));
  reg->callback([&] {
    const Gmm4 source = load_model_any(reg_source, reg_format);
    const Gmm4 target = load_model_any(reg_target, reg_format);
    const RigidTransform init =
        reg_init.empty() ? RigidTransform::identity() : load_transform(reg_init);
    RegistrationResult result;
    if (reg_variant == "anisotropic") {
      result = anisotropic_registration(init, source, target);
    } else if (reg_variant == "isoplanar") {
      result = isoplanar_registration(init, source, target);
    } else {
      result = isoplanar_hybrid_registration(init, source, target);
    }
    save_transform(result.transform, reg_out);
    std::cout << "final_cost: " << result.final_cost << "\n"
              << "iterations: " << result.iterations << "\n"
              << "converged: " << (result.converged ? "yes" : "no") << "\n";
  });

  // ---- posegraph ----
  auto* pg = app.add_subcommand("posegraph", "optimize a pose graph");
  std::string pg_in, pg_out;
  int pg_fixed = 0, pg_iters = 100;
  pg->add_option("--graph", pg_in)->required();
  pg->add_option("--fixed-node", pg_fixed);
  pg->add_option("--max-iters", pg_iters);
  pg->add_option("--out", pg_out)->required();
  pg->callback([&] {
    const PoseGraph graph = load_pose_graph(pg_in);
    const PoseGraphResult result = pose_graph_optimize(graph, pg_fixed,
                                                       pg_iters);
    save_pose_graph(result.graph, pg_out);
    std::cout << "initial_residual: " << result.initial_residual << "\n"
              << "final_residual: " << result.final_residual << "\n"
              << "iterations: " << result.iterations << "\n"
              << "converged: " << (result.converged ? "yes" : "no") << "\n";
  });

  // ---- occupancy ----
  auto* occ = app.add_subcommand("occupancy",
                                 "resample models into an occupancy grid");
  std::string occ_models_dir, occ_poses, occ_out, occ_dump;
  std::string occ_format = "binary";
  std::vector<double> occ_origin{0.0, 0.0, 0.0};
  std::vector<int> occ_dims{64, 64, 64};
  double occ_res = 0.1, occ_range = 10.0;
  std::int64_t occ_samples = 10000, occ_seed = -1;
  occ->add_option("--models-dir", occ_models_dir)->required();
  occ->add_option("--poses", occ_poses)->required();
  occ->add_option("--resolution", occ_res);
  occ->add_option("--origin", occ_origin)->expected(3);
  occ->add_option("--dims", occ_dims)->expected(3);
  occ->add_option("--max-range", occ_range);
  occ->add_option("--num-samples", occ_samples);
  occ->add_option("--seed", occ_seed);
  occ->add_option("--out", occ_out)->required();
  occ->add_option("--dump", occ_dump, "full-grid binary dump path");
  occ->add_option("--format", occ_format)
      ->check(CLI::IsMember({"binary", "json"}));
  occ->callback([&] {
    std::ifstream is(occ_poses);
    if (!is) throw IoError("cannot open " + occ_poses);
    nlohmann::json j;
    try {
      is >> j;
    } catch (const nlohmann::json::exception& e) {
      throw IoError("malformed poses JSON: " + std::string(e.what()));
    }

    GridParams params;
    params.resolution = occ_res;
    params.origin = Vec3(occ_origin[0], occ_origin[1], occ_origin[2]);
    params.dims = Eigen::Vector3i(occ_dims[0], occ_dims[1], occ_dims[2]);
    OccupancyGrid3D grid(params);

    const std::uint64_t seed = resolve_seed(occ_seed);
    std::uint64_t entry_idx = 0;
    for (const auto& entry : j.at("entries")) {
      const std::string model_path =
          (fs::path(occ_models_dir) / entry.at("model").get<std::string>())
              .string();
      const Gmm4 model = load_model_any(model_path, occ_format);
      Eigen::Quaterniond q(entry.at("quaternion_wxyz")[0].get<double>(),
                           entry.at("quaternion_wxyz")[1].get<double>(),
                           entry.at("quaternion_wxyz")[2].get<double>(),
                           entry.at("quaternion_wxyz")[3].get<double>());
      q.normalize();
      RigidTransform pose;
      pose.rotation = q.toRotationMatrix();
      pose.translation = Vec3(entry.at("translation")[0].get<double>(),
                              entry.at("translation")[1].get<double>(),
                              entry.at("translation")[2].get<double>());
      grid.insert_resampled_model(model, pose, occ_samples, occ_range,
                                  seed + entry_idx);
      ++entry_idx;
    }
    grid.save_occupied_ply(occ_out);
    if (!occ_dump.empty()) grid.dump(occ_dump);
    std::cout << "occupied: " << grid.query_occupied().size() << "\n"
              << "free: " << grid.query_free().size() << "\n"
              << "unknown: " << grid.query_unknown().size() << "\n";
  });

  // ---- bench ----
  auto* bench = app.add_subcommand("bench", "timing sweep over bandwidths");
  std::string bench_depth, bench_inten, bench_intr, bench_out = "bench.csv";
  bool bench_synth = false;
  double bench_bw_min = 0.0135, bench_bw_max = 0.0300;
  int bench_bw_count = 10, bench_reps = 10;
  std::vector<int> bench_decim{2, 3, 4};
  std::int64_t bench_seed = -1;
  bench->add_option("--depth", bench_depth);
  bench->add_option("--intensity", bench_inten);
  bench->add_option("--intrinsics", bench_intr);
  bench->add_flag("--synthetic", bench_synth, "use the built-in frame");
  bench->add_option("--bw-min", bench_bw_min);
  bench->add_option("--bw-max", bench_bw_max);
  bench->add_option("--bw-count", bench_bw_count);
  bench->add_option("--decimations", bench_decim);
  bench->add_option("--reps", bench_reps);
  bench->add_option("--seed", bench_seed);
  bench->add_option("--out", bench_out);
  bench->callback([&] {
    if (!bench_synth &&
        (bench_depth.empty() || bench_inten.empty() || bench_intr.empty())) {
      throw CLI::ValidationError(
          "bench", "either --synthetic or --depth/--intensity/--intrinsics");
    }
    run_bench(bench_depth, bench_inten, bench_intr, bench_synth, bench_bw_min,
              bench_bw_max, bench_bw_count, bench_decim, bench_reps,
              bench_seed, bench_out);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const CLI::Error& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
