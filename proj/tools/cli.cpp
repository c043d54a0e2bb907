#include "cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>

#include "json.hpp"
#include "unwarp/config.hpp"
#include "unwarp/error.hpp"
#include "unwarp/evaluation.hpp"
#include "unwarp/image_io.hpp"
#include "unwarp/manifest.hpp"
#include "unwarp/synthetic.hpp"

namespace unwarp::cli {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

// Thrown for problems that are the caller's fault; mapped to exit code 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Command-line overrides of RunConfig fields, applied after --config.
class ConfigFlags {
 public:
  void attach(CLI::App* app) {
    app->add_option("--config", config_path_, "JSON config file (same keys as the echo)");
    field(app, "--normal-window", &RunConfig::normal_window, "normal fit window (odd)");
    field(app, "--clusters", &RunConfig::clusters, "number of dominant axes");
    field(app, "--assign-deg,--assign", &RunConfig::assign_deg, "axis assignment angle");
    field(app, "--glancing-deg,--glancing", &RunConfig::glancing_deg, "glancing trim angle");
    field(app, "--min-patch-frac", &RunConfig::min_patch_frac, "smallest patch, image fraction");
    field(app, "--max-output-dim", &RunConfig::max_output_dim, "rectified raster size cap");
    field(app, "--ratio", &RunConfig::ratio, "descriptor ratio test");
    field(app, "--homography-px", &RunConfig::homography_px, "homography inlier threshold");
    field(app, "--sampson-px", &RunConfig::sampson_px, "epipolar inlier threshold");
    field(app, "--success-deg", &RunConfig::success_deg, "rotation error for success");
    field(app, "--seed", &RunConfig::seed, "RANSAC seed");
    field(app, "--clustering", &RunConfig::clustering, "orthogonal or histogram");
    field(app, "--extractor", &RunConfig::extractor, "reference or reference_binary");
    field(app, "--max-features", &RunConfig::max_features, "features per raster");
    field(app, "--ground-gate-deg", &RunConfig::ground_gate_deg, "ground patch gate angle");
    field(app, "--planar-ratio", &RunConfig::planar_ratio, "homography preference ratio");
    field(app, "--confidence", &RunConfig::confidence, "RANSAC confidence");
    field(app, "--max-iters", &RunConfig::max_iters, "RANSAC iteration cap");
    field(app, "--threads", &RunConfig::threads, "worker threads");

    auto mutual = std::make_shared<bool>(false);
    auto* mopt = app->add_flag("--mutual,!--no-mutual", *mutual, "mutual nearest neighbours");
    apply_.push_back([mutual, mopt](RunConfig& c) {
      if (mopt->count()) c.mutual = *mutual;
    });
    auto axis = std::make_shared<std::vector<double>>();
    auto* aopt = app->add_option("--ground-axis", *axis, "camera-frame ground normal x,y,z")
                     ->delimiter(',')
                     ->expected(3);
    apply_.push_back([axis, aopt](RunConfig& c) {
      if (aopt->count()) c.ground_axis = Vec3((*axis)[0], (*axis)[1], (*axis)[2]);
    });
  }

  RunConfig resolve() const {
    RunConfig c;
    try {
      if (!config_path_.empty()) c = load_config(config_path_);
      for (const auto& f : apply_) f(c);
      c.validate();
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
    return c;
  }

 private:
  template <typename T>
  void field(CLI::App* app, const std::string& names, T RunConfig::*member,
             const std::string& help) {
    auto value = std::make_shared<T>(RunConfig{}.*member);
    auto* opt = app->add_option(names, *value, help);
    apply_.push_back([value, opt, member](RunConfig& c) {
      if (opt->count()) c.*member = *value;
    });
  }

  std::string config_path_;
  std::vector<std::function<void(RunConfig&)>> apply_;
};

// Enumerated flag values: a bad name is a usage error.
template <typename Parse>
auto parse_arg(Parse parse, const std::string& value) {
  try {
    return parse(value);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

class Timer {
 public:
  explicit Timer(std::ostream& err) : err_(err), start_(Clock::now()), last_(start_) {}
  void lap(const std::string& stage) {
    const auto now = Clock::now();
    err_ << "timing: " << stage << ' ' << seconds(last_, now) << " s\n";
    last_ = now;
  }
  void total() { err_ << "timing: total " << seconds(start_, Clock::now()) << " s\n"; }

 private:
  static double seconds(Clock::time_point a, Clock::time_point b) {
    return std::chrono::duration<double>(b - a).count();
  }
  std::ostream& err_;
  Clock::time_point start_, last_;
};

void echo(std::ostream& err, const RunConfig& c) { err << "config: " << to_json(c) << '\n'; }

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::kIo, "cannot create " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
}

DepthMap load_depth(const fs::path& path, double scale) { return read_depth(path, scale); }

Image mask_image(const Mask& m) {
  Image out(m.width(), m.height(), 0.0f);
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = m[i] ? 1.0f : 0.0f;
  return out;
}

struct InputView {
  std::string image, depth, intrinsics;
  double depth_scale = 1000.0;

  void attach(CLI::App* app, bool depth_required) {
    app->add_option("--image", image, "grayscale PNG")->required();
    auto* d = app->add_option("--depth", depth, "PFM or 16-bit PNG depth");
    if (depth_required) d->required();
    app->add_option("--k", intrinsics, "intrinsics JSON")->required();
    app->add_option("--depth-scale", depth_scale, "raw units per metre for PNG depth");
  }
};

int cmd_rectify(const InputView& in, const std::string& out_dir, const RunConfig& cfg,
                std::ostream& out, std::ostream& err) {
  Timer t(err);
  const Image image = read_png_gray(in.image);
  const DepthMap depth = load_depth(in.depth, in.depth_scale);
  const Intrinsics K = read_intrinsics_json(in.intrinsics);
  t.lap("load");
  const RectifiedSet set = rectify_image(image, depth, K, cfg.rectify_config());
  t.lap("rectify");
  ensure_dir(out_dir);
  for (std::size_t i = 0; i < set.patches.size(); ++i) {
    const auto& p = set.patches[i];
    char stem[32];
    std::snprintf(stem, sizeof stem, "patch_%03zu", i);
    write_png_gray(fs::path(out_dir) / (std::string(stem) + ".png"), p.raster);
    write_png_gray(fs::path(out_dir) / (std::string(stem) + "_valid.png"), mask_image(p.valid));
    nlohmann::json j;
    std::vector<double> h;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) h.push_back(p.H.matrix()(r, c));
    j["H"] = h;
    j["width"] = p.width;
    j["height"] = p.height;
    j["scale"] = p.scale;
    j["normal"] = {p.source.normal.x(), p.source.normal.y(), p.source.normal.z()};
    j["axis"] = p.source.label;
    j["pixels"] = p.source.pixel_count;
    write_text(fs::path(out_dir) / (std::string(stem) + ".json"), j.dump(2) + "\n");
  }
  write_png_gray(fs::path(out_dir) / "non_planar.png", mask_image(set.non_planar));
  t.lap("write");
  out << set.patches.size() << " patches written to " << out_dir << '\n';
  t.total();
  return 0;
}

int cmd_extract(const InputView& in, const std::string& mode_name, const std::string& out_path,
                const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const PairMode mode = parse_arg(parse_pair_mode, mode_name);
  if (mode == PairMode::kRectified && in.depth.empty())
    throw UsageError("extract: --depth is required in rectified mode");
  Timer t(err);
  const Image image = read_png_gray(in.image);
  const Intrinsics K = read_intrinsics_json(in.intrinsics);
  t.lap("load");
  FeatureSet features;
  if (mode == PairMode::kRectified) {
    features = extract_features(image, load_depth(in.depth, in.depth_scale), K, cfg, mode);
  } else {
    const auto extractor = make_extractor(cfg.extractor, cfg.reference_params());
    features = detect_and_describe(image, Mask(image.width(), image.height(), 1), *extractor);
  }
  t.lap("extract");
  write_features(out_path, features);
  out << features.size() << " features written to " << out_path << '\n';
  t.total();
  return 0;
}

int cmd_match(const std::string& a_path, const std::string& b_path, const std::string& model,
              const std::string& out_path, const RunConfig& cfg, std::ostream& out,
              std::ostream& err) {
  if (model != "none" && model != "homography" && model != "fundamental")
    throw UsageError("match: --model must be none, homography or fundamental");
  Timer t(err);
  const FeatureSet a = read_features(a_path);
  const FeatureSet b = read_features(b_path);
  const MatchSet matches = match_descriptors(a, b, cfg.ratio, cfg.mutual);
  t.lap("match");
  std::vector<int> inliers;
  const PointPairs pts = gather_points(a, b, matches);
  try {
    if (model == "homography" && pts.size() >= 4)
      inliers = estimate_homography_ransac(pts, cfg.homography_options(cfg.seed)).inliers;
    else if (model == "fundamental" && pts.size() >= 8)
      inliers = estimate_fundamental_ransac(pts, cfg.fundamental_options(cfg.seed)).inliers;
  } catch (const Error& e) {
    err << "warning: " << model << " estimation failed: " << e.what() << '\n';
  }
  t.lap("estimate");
  write_text(out_path, matches_csv(matches, inliers));
  out << matches.size() << " matches, " << inliers.size() << " inliers\n";
  t.total();
  return 0;
}

int cmd_evaluate(const std::string& manifest_path, const std::string& mode_name,
                 const std::string& out_dir, const RunConfig& cfg, std::ostream& out,
                 std::ostream& err) {
  std::vector<PairMode> modes;
  if (mode_name == "both") modes = {PairMode::kRectified, PairMode::kPlain};
  else modes = {parse_arg(parse_pair_mode, mode_name)};
  Timer t(err);
  const Manifest manifest = load_manifest(manifest_path);
  for (const auto& w : manifest.warnings) err << "warning: " << w << '\n';
  t.lap("manifest");
  std::vector<PairResult> results;
  std::vector<BinRates> rates;
  for (PairMode m : modes) {
    auto r = evaluate_pairs(manifest, cfg, m, cfg.seed);
    t.lap("evaluate " + to_string(m));
    rates.push_back(localization_rates(r, m));
    results.insert(results.end(), r.begin(), r.end());
  }
  emit_report(results, rates, out_dir);
  for (const auto& br : rates) {
    std::size_t n = 0, ok = 0;
    for (const auto& b : br.bins) {
      n += b.count;
      ok += b.localized;
    }
    out << to_string(br.mode) << ": " << ok << '/' << n << " pairs localized\n";
  }
  t.total();
  return 0;
}

int cmd_relocalize(const std::string& queries_path, const std::string& database_path,
                   const std::string& mode_name, const std::string& out_dir,
                   const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const RelocMode mode = parse_arg(parse_reloc_mode, mode_name);
  Timer t(err);
  const auto load = [](const std::string& path) {
    std::vector<ViewData> views;
    for (const auto& e : load_view_list(path)) views.push_back(load_view(e));
    return views;
  };
  const auto queries = load(queries_path);
  const auto database = load(database_path);
  t.lap("load");
  const auto results = relocalize(queries, database, mode, cfg, cfg.ground_axis, cfg.seed);
  t.lap("relocalize");
  ensure_dir(out_dir);
  write_text(fs::path(out_dir) / "relocalization.csv", relocalization_csv(results));
  for (const auto& r : results)
    out << r.query_id << " -> " << r.ranking.front().id << " (" << r.ranking.front().inliers
        << " inliers)\n";
  t.total();
  return 0;
}

struct SynthArgs {
  std::string layout = "single_plane";
  double sep = 30.0;
  double distance = 3.0;
  std::uint64_t seed = 0;
  std::string out;
  std::string id = "pair";
  int per_bin = 0;
  int count = 0;
  double noise = 0.0;
  double noise_corr = SynthOptions{}.noise_correlation_px;
  int width = SynthOptions{}.width;
  int height = SynthOptions{}.height;
  double focal = SynthOptions{}.focal;
};

int cmd_synth(const SynthArgs& a, std::ostream& out, std::ostream& err) {
  SynthOptions so;
  so.width = a.width;
  so.height = a.height;
  so.focal = a.focal;
  so.depth_noise = a.noise;
  so.noise_correlation_px = a.noise_corr;
  if (so.width < 16 || so.height < 16 || so.focal <= 0)
    throw UsageError("synth: image size must be at least 16 px and focal positive");
  if (so.noise_correlation_px < 0) throw UsageError("synth: --noise-corr must be >= 0");
  if (!(a.noise >= 0 && a.noise < 0.5)) throw UsageError("synth: --noise must lie in [0, 0.5)");
  if (!(a.sep >= 0 && a.sep < 180)) throw UsageError("synth: --sep must lie in [0, 180)");
  if (!(a.distance > 0.5 && a.distance < 100))
    throw UsageError("synth: --distance must lie in (0.5, 100)");
  if (a.per_bin < 0 || a.count < 0) throw UsageError("synth: counts must be >= 0");
  const Layout layout = parse_arg(parse_layout, a.layout);
  Timer t(err);
  ensure_dir(a.out);
  const fs::path dir(a.out);

  if (layout == Layout::kOppositeGround && a.count > 0) {
    const auto sc = opposite_ground_scenario(a.count, a.seed, so);
    std::vector<ViewManifestEntry> qs, ds;
    for (int i = 0; i < a.count; ++i) {
      char qid[16], did[16];
      std::snprintf(qid, sizeof qid, "q%03d", i);
      std::snprintf(did, sizeof did, "d%03d", i);
      ViewManifestEntry q{qid, dir / (std::string(qid) + ".png"), dir / (std::string(qid) + ".pfm"),
                          sc.K};
      ViewManifestEntry d{did, dir / (std::string(did) + ".png"), dir / (std::string(did) + ".pfm"),
                          sc.K};
      write_png_gray(q.img, sc.queries[i].image);
      write_pfm(q.depth, sc.queries[i].depth);
      write_png_gray(d.img, sc.database[i].image);
      write_pfm(d.depth, sc.database[i].depth);
      qs.push_back(q);
      ds.push_back(d);
    }
    write_view_list(dir / "queries.jsonl", qs);
    write_view_list(dir / "database.jsonl", ds);
    nlohmann::json j;
    j["ground_axis"] = {sc.ground_axis.x(), sc.ground_axis.y(), sc.ground_axis.z()};
    j["sites"] = a.count;
    write_text(dir / "scenario.json", j.dump(2) + "\n");
    t.lap("render");
    out << a.count << " query/database sites written to " << a.out << "; ground axis "
        << sc.ground_axis.x() << ',' << sc.ground_axis.y() << ',' << sc.ground_axis.z() << '\n';
    t.total();
    return 0;
  }

  std::vector<CaseSpec> plan;
  if (a.per_bin > 0) {
    plan = campaign_plan(a.per_bin, a.seed);
  } else {
    plan.push_back({a.id, a.sep, a.distance, layout, a.seed});
  }
  std::vector<PairManifestEntry> entries;
  for (const auto& spec : plan) {
    const TwoViewCase c = two_view_case(spec.sep_deg, spec.distance, spec.layout, spec.seed, so);
    entries.push_back(write_case(c, dir, spec.id, to_string(spec.layout)));
  }
  write_manifest(dir / "manifest.jsonl", entries);
  t.lap("render");
  out << entries.size() << " pairs written to " << (dir / "manifest.jsonl").string() << '\n';
  t.total();
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Depth-guided perspective rectification and pose evaluation", "unwarp"};
  app.set_version_flag("--version", std::string("unwarp ") + UNWARP_VERSION);
  app.require_subcommand(1);

  InputView view;
  std::string out_path, mode, model = "homography", manifest, feat_a, feat_b, queries, database;

  ConfigFlags rectify_flags, extract_flags, match_flags, evaluate_flags, reloc_flags;

  auto* rectify = app.add_subcommand("rectify", "Rectify the planar patches of one image");
  view.attach(rectify, true);
  rectify->add_option("--out", out_path, "output directory")->required();
  rectify_flags.attach(rectify);

  auto* extract = app.add_subcommand("extract", "Extract features into a PRFT file");
  InputView extract_view;
  extract_view.attach(extract, false);
  std::string extract_mode = "rectified";
  extract->add_option("--mode", extract_mode, "rectified or plain");
  extract->add_option("--out", out_path, "output .prft file")->required();
  extract_flags.attach(extract);

  auto* match = app.add_subcommand("match", "Match two feature files");
  match->add_option("--a", feat_a, "features of image A")->required();
  match->add_option("--b", feat_b, "features of image B")->required();
  match->add_option("--model", model, "none, homography or fundamental");
  match->add_option("--out", out_path, "matches CSV")->required();
  match_flags.attach(match);

  auto* evaluate = app.add_subcommand("evaluate", "Relative pose campaign over a manifest");
  std::string eval_mode = "both";
  evaluate->add_option("--manifest", manifest, "pair manifest (JSON lines)")->required();
  evaluate->add_option("--mode", eval_mode, "rectified, plain or both");
  evaluate->add_option("--out", out_path, "report directory")->required();
  evaluate_flags.attach(evaluate);

  auto* reloc = app.add_subcommand("relocalize", "Rank database views for every query");
  std::string reloc_mode = "homography";
  reloc->add_option("--queries", queries, "query view list")->required();
  reloc->add_option("--database", database, "database view list")->required();
  reloc->add_option("--mode", reloc_mode, "homography or fundamental");
  reloc->add_option("--out", out_path, "output directory")->required();
  reloc_flags.attach(reloc);

  auto* synth = app.add_subcommand("synth", "Render a synthetic dataset");
  SynthArgs sa;
  synth->add_option("--layout", sa.layout,
                    "single_plane, two_orthogonal, ground_plus_wall or opposite_ground");
  synth->add_option("--sep", sa.sep, "azimuth separation in degrees");
  synth->add_option("--distance", sa.distance, "camera distance in metres");
  synth->add_option("--seed", sa.seed, "scene seed");
  synth->add_option("--id", sa.id, "pair id for a single pair");
  synth->add_option("--per-bin", sa.per_bin, "campaign: pairs per 10-degree bin");
  synth->add_option("--count", sa.count, "opposite_ground: number of sites");
  synth->add_option("--noise", sa.noise, "depth noise sigma as a fraction of depth");
  synth->add_option("--noise-corr", sa.noise_corr, "depth noise correlation length in px");
  synth->add_option("--width", sa.width, "image width");
  synth->add_option("--height", sa.height, "image height");
  synth->add_option("--focal", sa.focal, "focal length in px");
  synth->add_option("--out", sa.out, "output directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    if (code == 0) return 0;
    CLI::App* active = &app;
    for (auto* s : app.get_subcommands()) active = s;
    err << active->help();
    return 1;
  }

  try {
    const auto with_config = [&](const ConfigFlags& flags) {
      const RunConfig cfg = flags.resolve();
      echo(err, cfg);
      return cfg;
    };
    if (rectify->parsed()) return cmd_rectify(view, out_path, with_config(rectify_flags), out, err);
    if (extract->parsed())
      return cmd_extract(extract_view, extract_mode, out_path, with_config(extract_flags), out, err);
    if (match->parsed())
      return cmd_match(feat_a, feat_b, model, out_path, with_config(match_flags), out, err);
    if (evaluate->parsed())
      return cmd_evaluate(manifest, eval_mode, out_path, with_config(evaluate_flags), out, err);
    if (reloc->parsed())
      return cmd_relocalize(queries, database, reloc_mode, out_path, with_config(reloc_flags), out,
                            err);
    if (synth->parsed()) return cmd_synth(sa, out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace unwarp::cli
