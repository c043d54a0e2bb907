// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails. Criterion numbers given on the
// command line restrict the run.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "oracle.hpp"
#include "unwarp/evaluation.hpp"
#include "unwarp/image_io.hpp"
#include "unwarp/parallel.hpp"
#include "unwarp/plane_segmentation.hpp"
#include "unwarp/rectification.hpp"
#include "unwarp/synthetic.hpp"

namespace unwarp {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;
using testing::deg;

struct Verdict {
  bool pass = true;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double angle_deg(const Vec3& a, const Vec3& b) {
  return deg(std::atan2(a.cross(b).norm(), a.dot(b)));
}

Mask plane_mask(const RenderedView& v, int id) {
  Mask m(v.plane_id.width(), v.plane_id.height(), 0);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = v.plane_id[i] == id;
  return m;
}

PairData pair_from(const TwoViewCase& c, const std::string& id, const std::string& scene) {
  PairData p;
  p.id = id;
  p.scene = scene;
  p.image_a = c.view_a.image;
  p.image_b = c.view_b.image;
  p.depth_a = c.view_a.depth;
  p.depth_b = c.view_b.depth;
  p.K_a = c.K_a;
  p.K_b = c.K_b;
  p.R_ab = c.R_ab;
  p.t_ab = c.t_ab;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// 1. A fronto-parallel plane yields one patch whose homography is a pure
// translation.
Verdict fronto_identity() {
  const Intrinsics K = testing::make_K();
  const RenderedView v = testing::render_single(testing::tilted_plane(2.0, 0.0), K);
  const auto t0 = Clock::now();
  const RectifiedSet set = rectify_image(v.image, v.depth, K, RectifyConfig{});
  const double dt = seconds_since(t0);
  if (set.patches.size() != 1) return {false, std::to_string(set.patches.size()) + " patches"};
  const Mat3& H = set.patches[0].H.matrix();
  const double dev = std::max({std::abs(H(0, 0) - 1), std::abs(H(1, 1) - 1), std::abs(H(0, 1)),
                               std::abs(H(1, 0)), std::abs(H(2, 0)), std::abs(H(2, 1)),
                               std::abs(H(2, 2) - 1)});
  return {dev <= 1e-6 && dt < 1.0,
          "1 patch, max deviation from translation " + fmt("%.2e", dev) + ", " +
              fmt("%.3f s", dt)};
}

// 2. Per-pixel and refined normals of a 45 degree plane.
Verdict normal_accuracy() {
  const Intrinsics K = testing::make_K();
  const double tilt = 45.0;
  const RenderedView v = testing::render_single(testing::tilted_plane(3.0, tilt), K);
  const Vec3 gt = testing::tilted_normal(tilt);
  const NormalMap n = estimate_normals(backproject_map(v.depth, K), K, 5);
  double worst = 0;
  for (int y = 2; y < K.height - 2; ++y)
    for (int x = 2; x < K.width - 2; ++x) {
      if (!n.valid(x, y)) return {false, "interior normal missing"};
      worst = std::max(worst, angle_deg(n.normals(x, y), gt));
    }
  const RectifiedSet set = rectify_image(v.image, v.depth, K, RectifyConfig{});
  if (set.patches.size() != 1) return {false, std::to_string(set.patches.size()) + " patches"};
  const double refined = angle_deg(set.patches[0].source.normal, gt);
  return {worst <= 0.5 && refined <= 0.2,
          "worst interior normal " + fmt("%.4f deg", worst) + ", refined " +
              fmt("%.4f deg", refined)};
}

// 3. Cluster frames are orthonormal and assignments ignore normal signs.
Verdict orthogonality() {
  std::mt19937_64 rng(3);
  std::bernoulli_distribution flip(0.5);
  double worst = 0;
  int scenes = 0, mismatched = 0;
  SynthOptions noisy;
  noisy.depth_noise = 0.01;
  for (const SynthOptions& so : {SynthOptions{}, noisy}) {
    for (Layout layout : {Layout::kSinglePlane, Layout::kTwoOrthogonal, Layout::kGroundPlusWall}) {
      for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        const TwoViewCase c = two_view_case(15.0 * seed, 3.0, layout, seed, so);
        for (const RenderedView* v : {&c.view_a, &c.view_b}) {
          NormalMap n = estimate_normals(backproject_map(v->depth, c.K_a), c.K_a, 5);
          const auto a = cluster_normals_orthogonal(n);
          const Mat3 C = a.frame.axes;
          worst = std::max(worst, (C.transpose() * C - Mat3::Identity()).cwiseAbs().maxCoeff());
          for (std::size_t i = 0; i < n.normals.size(); ++i)
            if (flip(rng)) n.normals[i] = -n.normals[i];
          const auto b = cluster_normals_orthogonal(n);
          if (a.assignment.labels != b.assignment.labels) ++mismatched;
          ++scenes;
        }
      }
    }
  }
  return {worst <= 1e-9 && mismatched == 0,
          std::to_string(scenes) + " scenes, max |C^T C - I| " + fmt("%.2e", worst) + ", " +
              std::to_string(mismatched) + " changed assignments under sign flips"};
}

// 4. H_rect * H_gt^-1 is a similarity on every oracle plane, with H_gt the
// image-to-plane map.
Verdict similarity_residual() {
  double worst = 0;
  int planes = 0;
  for (Layout layout : {Layout::kSinglePlane, Layout::kTwoOrthogonal, Layout::kGroundPlusWall}) {
    for (double sep : {5.0, 25.0, 45.0, 65.0, 85.0, 105.0, 125.0, 145.0, 165.0}) {
      const TwoViewCase c = two_view_case(sep, 3.0, layout, static_cast<std::uint64_t>(sep));
      for (int view = 0; view < 2; ++view) {
        const RenderedView& v = view == 0 ? c.view_a : c.view_b;
        const CameraPose& pose = view == 0 ? c.pose_a : c.pose_b;
        const Intrinsics& K = view == 0 ? c.K_a : c.K_b;
        for (std::size_t id = 0; id < c.scene.planes.size(); ++id) {
          const ScenePlane& plane = c.scene.planes[id];
          const Mask m = plane_mask(v, static_cast<int>(id));
          if (count_set(m) < 100) continue;
          const Vec3 n = testing::camera_facing_normal(plane, pose);
          Mask trimmed;
          try {
            trimmed = glancing_mask(m, n, K, 80.0);
          } catch (const Error&) {
            continue;
          }
          const RectifyingFrame f = rectifying_homography(K, rectifying_rotation(n), trimmed);
          const Mat3 H_gt_inv = testing::plane_to_image(plane, pose, K);
          Mat3 M = f.H.matrix() * H_gt_inv;
          M /= M(2, 2);
          worst = std::max({worst, std::abs(M(2, 0)), std::abs(M(2, 1))});
          ++planes;
        }
      }
    }
  }
  return {planes > 0 && worst <= 1e-6,
          std::to_string(planes) + " planes, max |bottom row - (0,0,1)| " + fmt("%.2e", worst)};
}

struct Campaign {
  std::vector<PairResult> rectified, plain;
  double seconds = 0;
};

// Generates each pair on the fly so the full campaign never sits in memory.
Campaign run_campaign(const std::vector<CaseSpec>& plan, const SynthOptions& so, bool with_plain,
                      std::uint64_t seed) {
  Campaign out;
  RunConfig cfg;
  double eval = 0;
  for (const auto& spec : plan) {
    const TwoViewCase c = two_view_case(spec.sep_deg, spec.distance, spec.layout, spec.seed, so);
    const PairData pair = pair_from(c, spec.id, to_string(spec.layout));
    const std::uint64_t s = derive_seed(seed, spec.id);
    const auto t0 = Clock::now();
    out.rectified.push_back(evaluate_pair(pair, cfg, PairMode::kRectified, s));
    if (with_plain) out.plain.push_back(evaluate_pair(pair, cfg, PairMode::kPlain, s));
    eval += seconds_since(t0);
  }
  out.seconds = eval;
  return out;
}

std::string rate_row(const BinRates& r, int last_bin) {
  std::string s;
  for (int k = 0; k <= last_bin; ++k) s += (k ? " " : "") + fmt("%.1f", r.bins[k].rate);
  return s;
}

constexpr std::uint64_t kCampaignSeed = 1;

// 5. Localization rate per difficulty bin, rectified against plain.
Verdict trend(Campaign& clean) {
  clean = run_campaign(campaign_plan(10, kCampaignSeed), SynthOptions{}, true, kCampaignSeed);
  const BinRates r = localization_rates(clean.rectified, PairMode::kRectified);
  const BinRates p = localization_rates(clean.plain, PairMode::kPlain);
  bool ok = clean.seconds <= 600;
  std::vector<std::string> why;
  for (int k = 0; k <= 8; ++k)
    if (r.bins[k].rate < 0.9) why.push_back("rectified bin " + std::to_string(k) + " < 0.9");
  for (int k = 9; k <= 13; ++k)
    if (r.bins[k].rate < 0.7) why.push_back("rectified bin " + std::to_string(k) + " < 0.7");
  bool dropped = false;
  for (int k = 0; k <= 8; ++k) dropped = dropped || p.bins[k].rate < 0.3;
  if (!dropped) why.push_back("plain never below 0.3 by bin 8");
  for (int k = 0; k < kNumBins; ++k)
    if (!r.bins[k].empty && r.bins[k].rate < p.bins[k].rate)
      why.push_back("plain beats rectified in bin " + std::to_string(k));
  ok = ok && why.empty();
  std::string detail = "rectified [" + rate_row(r, kNumBins - 1) + "] plain [" +
                       rate_row(p, kNumBins - 1) + "] " + fmt("%.1f s", clean.seconds);
  for (const auto& w : why) detail += "; " + w;
  return {ok, detail};
}

// 6. Opposite-view relocalisation, homography inliers against fundamental.
Verdict relocalization() {
  const int n = 20;
  const auto sc = opposite_ground_scenario(n, 99);
  std::vector<ViewData> q, d;
  for (int i = 0; i < n; ++i) {
    q.push_back({"q" + std::to_string(i), sc.queries[i].image, sc.queries[i].depth, sc.K});
    d.push_back({"d" + std::to_string(i), sc.database[i].image, sc.database[i].depth, sc.K});
  }
  const auto top1 = [&](RelocMode mode, const std::optional<Vec3>& axis) {
    int correct = 0;
    for (const auto& r : relocalize(q, d, mode, RunConfig{}, axis, 5)) {
      const int expected = std::stoi(r.query_id.substr(1));
      correct += r.ranking.front().database_index == expected;
    }
    return correct;
  };
  const int h = top1(RelocMode::kHomography, sc.ground_axis);
  const int f = top1(RelocMode::kFundamental, std::nullopt);
  return {h >= 18 && f <= 8, "homography top-1 " + std::to_string(h) + "/20, fundamental " +
                                 std::to_string(f) + "/20"};
}

// 7. Noise-free pose recovery and outlier recall.
Verdict pose_exactness() {
  double worst_r = 0, worst_t = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const auto tv = testing::random_two_view(50, seed);
    TwoViewOptions opt;
    opt.seed = seed;
    try {
      const TwoViewEstimate est = estimate_two_view_pose(tv.px, tv.Ka, tv.Kb, opt);
      worst_r = std::max(worst_r, rotation_error_deg(est.pose.R, tv.R));
      worst_t = std::max(worst_t, direction_error_deg(est.pose.t, tv.t));
    } catch (const Error& e) {
      return {false, "seed " + std::to_string(seed) + ": " + e.what()};
    }
  }
  double worst_recall = 1.0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    auto tv = testing::random_two_view(70, seed);
    std::mt19937_64 rng(seed + 1000);
    std::uniform_real_distribution<double> ux(0, 639), uy(0, 479);
    for (int i = 0; i < 30; ++i) {
      tv.px.a.emplace_back(ux(rng), uy(rng));
      tv.px.b.emplace_back(ux(rng), uy(rng));
    }
    RansacOptions opt;
    opt.threshold = 2.0;
    opt.seed = seed;
    const EpipolarEstimate est = estimate_essential_ransac(tv.px, tv.Ka, tv.Kb, opt);
    const auto recalled =
        std::count_if(est.inliers.begin(), est.inliers.end(), [](int i) { return i < 70; });
    worst_recall = std::min(worst_recall, recalled / 70.0);
  }
  return {worst_r < 1e-3 && worst_t < 1e-2 && worst_recall >= 0.98,
          "worst rotation " + fmt("%.2e deg", worst_r) + ", translation " +
              fmt("%.2e deg", worst_t) + ", worst recall at 30% outliers " +
              fmt("%.3f", worst_recall)};
}

// 8. Rotation error metric and difficulty bins.
Verdict metrics() {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g;
  double worst = 0;
  for (double angle : {0.0, 1e-4, 0.5, 5.0, 10.0, 45.0, 90.0, 135.0, 179.0, 180.0}) {
    for (int i = 0; i < 20; ++i) {
      const Vec3 axis(g(rng), g(rng), g(rng));
      const Mat3 R = testing::rotation_about(axis, angle);
      const Mat3 base = testing::random_rotation(rng);
      worst = std::max(worst, std::abs(rotation_error_deg(R * base, base) - angle));
    }
  }
  const bool bins_ok = difficulty_bin_from_angle(0.0) == 0 && difficulty_bin_from_angle(10.0) == 1 &&
                       difficulty_bin_from_angle(179.9) == 17 &&
                       difficulty_bin(Mat3::Identity()) == 0 &&
                       difficulty_bin(testing::rotation_about(Vec3::UnitZ(), 95.0)) == 9;
  return {worst <= 1e-9 && bins_ok, "worst axis-angle error " + fmt("%.2e deg", worst) +
                                        (bins_ok ? ", bins exact" : ", bin boundary wrong")};
}

// 9. CLI outputs do not depend on the thread count.
Verdict determinism() {
  testing::TempDir dir("acceptance_cli");
  std::ostringstream sink;
  const auto cli = [&](std::vector<std::string> args) { return cli::run(args, sink, sink); };
  const std::string data = (dir / "data").string();
  if (cli({"synth", "--per-bin", "1", "--seed", "9", "--out", data}) != 0)
    return {false, "synth failed"};
  if (cli({"synth", "--layout", "opposite_ground", "--count", "3", "--seed", "9", "--out",
           (dir / "reloc").string()}) != 0)
    return {false, "synth opposite_ground failed"};
  write_intrinsics_json(dir / "K.json", testing::make_K());
  const std::string K = (dir / "K.json").string();
  for (const char* t : {"1", "8"}) {
    const std::string out = (dir / (std::string("t") + t)).string();
    if (cli({"evaluate", "--manifest", data + "/manifest.jsonl", "--out", out, "--threads", t,
             "--seed", "4"}) != 0)
      return {false, "evaluate failed"};
    if (cli({"relocalize", "--queries", (dir / "reloc" / "queries.jsonl").string(), "--database",
             (dir / "reloc" / "database.jsonl").string(), "--out", out, "--threads", t}) != 0)
      return {false, "relocalize failed"};
    for (const char* v : {"a", "b"}) {
      const std::string stem = data + "/b03_000_" + v;
      if (cli({"extract", "--image", stem + ".png", "--depth", stem + ".pfm", "--k", K, "--out",
               out + "/" + v + ".prft", "--threads", t}) != 0)
        return {false, "extract failed"};
    }
    if (cli({"match", "--a", out + "/a.prft", "--b", out + "/b.prft", "--model", "fundamental",
             "--out", out + "/matches.csv", "--threads", t}) != 0)
      return {false, "match failed"};
  }
  int files = 0;
  for (const char* f : {"pairs.csv", "rates.csv", "relocalization.csv", "matches.csv"}) {
    const std::string a = slurp(dir / "t1" / f), b = slurp(dir / "t8" / f);
    if (a.empty() || a != b) return {false, std::string(f) + " differs between 1 and 8 threads"};
    ++files;
  }
  return {true, std::to_string(files) + " CSV files byte-identical for --threads 1 and 8"};
}

// 10. Correlated depth noise of 1% leaves the easy bins nearly intact.
Verdict noise_robustness(const Campaign& clean) {
  std::vector<CaseSpec> plan;
  for (const auto& s : campaign_plan(10, kCampaignSeed))
    if (s.sep_deg < 90.0) plan.push_back(s);
  SynthOptions so;
  so.depth_noise = 0.01;
  const Campaign noisy = run_campaign(plan, so, false, kCampaignSeed);
  const auto rate = [](const std::vector<PairResult>& rs) {
    std::size_t n = 0, ok = 0;
    for (const auto& r : rs) {
      if (r.bin > 8) continue;
      ++n;
      ok += r.success;
    }
    return n ? static_cast<double>(ok) / n : 0.0;
  };
  const double before = rate(clean.rectified), after = rate(noisy.rectified);
  return {before - after <= 0.15, "rectified bins 0-8 rate " + fmt("%.3f", before) +
                                      " clean, " + fmt("%.3f", after) + " with noise"};
}

}  // namespace
}  // namespace unwarp

int main(int argc, char** argv) {
  using namespace unwarp;
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  const auto wanted = [&](int k) { return only.empty() || only.count(k) > 0; };

  Campaign clean;
  bool have_clean = false;
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria = {
      {"fronto-parallel identity", fronto_identity},
      {"normal accuracy", normal_accuracy},
      {"orthogonality and antipodal invariance", orthogonality},
      {"similarity residual", similarity_residual},
      {"trend reproduction",
       [&] {
         have_clean = true;
         return trend(clean);
       }},
      {"opposite-view relocalization", relocalization},
      {"pose solver exactness", pose_exactness},
      {"metric and binning", metrics},
      {"determinism", determinism},
      {"noise robustness",
       [&] {
         if (!have_clean) trend(clean);
         return noise_robustness(clean);
       }},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int k = static_cast<int>(i) + 1;
    if (!wanted(k)) continue;
    Verdict v;
    const auto t0 = Clock::now();
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failed += !v.pass;
    std::printf("criterion %2d %s  %s: %s (%.1f s)\n", k, v.pass ? "PASS" : "FAIL",
                criteria[i].first, v.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
