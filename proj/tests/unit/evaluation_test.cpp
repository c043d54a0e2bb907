#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "oracle.hpp"
#include "unwarp/error.hpp"
#include "unwarp/evaluation.hpp"
#include "unwarp/manifest.hpp"
#include "unwarp/synthetic.hpp"

namespace unwarp {
namespace {

using testing::rotation_about;
using testing::TempDir;
using testing::thrown_code;

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

const char* kLine =
    R"({"id":"%s","img_a":"a.png","img_b":"b.png","depth_a":"a.pfm","depth_b":"b.pfm",)"
    R"("K_a":{"fx":260,"fy":260,"cx":160,"cy":120,"width":320,"height":240},)"
    R"("K_b":{"fx":260,"fy":260,"cx":160,"cy":120,"width":320,"height":240},)"
    R"("q_ab":[%s],"t_ab":[1,0,0],"scene":"single_plane"})";

std::string manifest_line(const std::string& id, const std::string& q) {
  char buf[1024];
  std::snprintf(buf, sizeof buf, kLine, id.c_str(), q.c_str());
  return buf;
}

PairData pair_from(const TwoViewCase& c, const std::string& id) {
  PairData p;
  p.id = id;
  p.scene = "test";
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

PairResult fake_result(int bin, bool success, PairMode mode = PairMode::kRectified) {
  PairResult r;
  r.id = "r" + std::to_string(bin);
  r.mode = mode;
  r.bin = bin;
  r.gt_angle_deg = bin * 10 + 5;
  r.success = success;
  return r;
}

TEST(Manifest, LoadsEveryEntry) {
  TempDir dir("manifest_load");
  spit(dir / "m.jsonl", manifest_line("p0", "1,0,0,0") + "\n\n" +
                            manifest_line("p1", "0.7071067811865476,0,0.7071067811865476,0") +
                            "\n" + manifest_line("p2", "1,0,0,0") + "\n");
  const Manifest m = load_manifest(dir / "m.jsonl", false);
  ASSERT_EQ(m.entries.size(), 3u);
  EXPECT_TRUE(m.warnings.empty());
  EXPECT_EQ(m.entries[1].id, "p1");
  EXPECT_EQ(m.entries[1].line, 3);
  EXPECT_NEAR(rotation_angle_deg(m.entries[1].rotation()), 90.0, 1e-9);
  EXPECT_EQ(m.entries[0].img_a, dir / "a.png");
}

TEST(Manifest, NonUnitQuaternionNamesTheEntry) {
  TempDir dir("manifest_quat");
  spit(dir / "m.jsonl", manifest_line("good", "1,0,0,0") + "\n" +
                            manifest_line("bad_one", "0.9,0,0,0") + "\n");
  try {
    load_manifest(dir / "m.jsonl", false);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kValidation);
    EXPECT_NE(std::string(e.what()).find("bad_one"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos);
  }
}

TEST(Manifest, MissingFieldAndMissingFile) {
  TempDir dir("manifest_bad");
  spit(dir / "m.jsonl", R"({"id":"x","img_a":"a.png"})" "\n");
  EXPECT_EQ(thrown_code([&] { load_manifest(dir / "m.jsonl", false); }), ErrorCode::kParse);
  spit(dir / "m.jsonl", manifest_line("p0", "1,0,0,0") + "\n");
  EXPECT_EQ(thrown_code([&] { load_manifest(dir / "m.jsonl", true); }), ErrorCode::kValidation);
  spit(dir / "m.jsonl", "not json\n");
  EXPECT_EQ(thrown_code([&] { load_manifest(dir / "m.jsonl", false); }), ErrorCode::kParse);
}

TEST(Manifest, EmptyManifestWarns) {
  TempDir dir("manifest_empty");
  spit(dir / "m.jsonl", "\n  \n");
  const Manifest m = load_manifest(dir / "m.jsonl");
  EXPECT_TRUE(m.entries.empty());
  ASSERT_EQ(m.warnings.size(), 1u);
}

TEST(Manifest, WriteLoadRoundTrip) {
  TempDir dir("manifest_rt");
  PairManifestEntry e;
  e.id = "x";
  e.img_a = dir / "sub" / "a.png";
  e.img_b = dir / "sub" / "b.png";
  e.depth_a = dir / "sub" / "a.pfm";
  e.depth_b = dir / "sub" / "b.pfm";
  e.K_a = e.K_b = testing::make_K();
  e.q_ab = Eigen::Quaterniond(rotation_about(Vec3(1, 2, 3), 33.0));
  e.t_ab = Vec3(0.1, 0.2, 0.3);
  e.scene = "s";
  e.depth_scale = 5000;
  write_manifest(dir / "m.jsonl", {e});
  const Manifest m = load_manifest(dir / "m.jsonl", false);
  ASSERT_EQ(m.entries.size(), 1u);
  const auto& r = m.entries[0];
  EXPECT_EQ(r.img_b.lexically_normal(), e.img_b.lexically_normal());
  EXPECT_LT((r.rotation() - e.rotation()).norm(), 1e-12);
  EXPECT_LT((r.t_ab - e.t_ab).norm(), 1e-15);
  EXPECT_EQ(r.depth_scale, 5000);
  EXPECT_EQ(r.scene, "s");
}

TEST(ViewList, RoundTrip) {
  TempDir dir("views");
  ViewManifestEntry v{"q0", dir / "q.png", dir / "q.pfm", testing::make_K(), 1000.0, 0};
  write_view_list(dir / "v.jsonl", {v, v});
  const auto back = load_view_list(dir / "v.jsonl", false);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].id, "q0");
  EXPECT_EQ(back[1].K.fx, v.K.fx);
}

TEST(DifficultyBin, Examples) {
  EXPECT_EQ(difficulty_bin(Mat3::Identity()), 0);
  EXPECT_EQ(difficulty_bin(rotation_about(Vec3::UnitZ(), 95.0)), 9);
  EXPECT_EQ(difficulty_bin_from_angle(10.0), 1);
  EXPECT_EQ(difficulty_bin_from_angle(9.999), 0);
  EXPECT_EQ(difficulty_bin_from_angle(179.9), 17);
  EXPECT_EQ(difficulty_bin_from_angle(180.0), 17);
}

TEST(DifficultyBin, UsesRotationMagnitudeAboutAnyAxis) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 200; ++i) {
    const Vec3 axis = Vec3::Random().normalized();
    const double angle = std::uniform_real_distribution<double>(0.5, 179.5)(rng);
    const Mat3 R = rotation_about(axis, angle);
    EXPECT_NEAR(rotation_angle_deg(R), angle, 1e-6);
    EXPECT_EQ(difficulty_bin(R), static_cast<int>(angle / 10.0));
  }
}

TEST(Modes, NamesRoundTrip) {
  for (PairMode m : {PairMode::kRectified, PairMode::kPlain})
    EXPECT_EQ(parse_pair_mode(to_string(m)), m);
  for (RelocMode m : {RelocMode::kHomography, RelocMode::kFundamental})
    EXPECT_EQ(parse_reloc_mode(to_string(m)), m);
  EXPECT_THROW(parse_pair_mode("fancy"), Error);
  EXPECT_THROW(parse_reloc_mode("fancy"), Error);
}

TEST(LocalizationRates, SevenOfTen) {
  std::vector<PairResult> rs;
  for (int i = 0; i < 10; ++i) rs.push_back(fake_result(2, i < 7));
  const BinRates br = localization_rates(rs, PairMode::kRectified);
  EXPECT_EQ(br.bins[2].count, 10u);
  EXPECT_EQ(br.bins[2].localized, 7u);
  EXPECT_DOUBLE_EQ(br.bins[2].rate, 0.7);
  EXPECT_FALSE(br.bins[2].empty);
  EXPECT_TRUE(br.bins[3].empty);
  EXPECT_EQ(br.bins[3].count, 0u);
}

TEST(LocalizationRates, AllSuccessfulIsOne) {
  std::vector<PairResult> rs;
  for (int b = 0; b < kNumBins; ++b) rs.push_back(fake_result(b, true));
  const BinRates br = localization_rates(rs, PairMode::kRectified);
  for (const auto& b : br.bins) EXPECT_DOUBLE_EQ(b.rate, 1.0);
}

TEST(LocalizationRates, FiltersByModeAndPartitionsTheDataset) {
  std::vector<PairResult> rs;
  std::mt19937_64 rng(2);
  std::size_t rectified = 0;
  for (int i = 0; i < 300; ++i) {
    const PairMode m = rng() % 3 == 0 ? PairMode::kPlain : PairMode::kRectified;
    if (m == PairMode::kRectified) ++rectified;
    rs.push_back(fake_result(static_cast<int>(rng() % kNumBins), rng() % 2, m));
  }
  const BinRates br = localization_rates(rs, PairMode::kRectified);
  std::size_t total = 0;
  for (const auto& b : br.bins) {
    total += b.count;
    EXPECT_LE(b.localized, b.count);
  }
  EXPECT_EQ(total, rectified);
}

TEST(Report, RatesTableHasOneRowPerModeAndBin) {
  std::vector<PairResult> rs;
  for (int b = 0; b < 5; ++b) {
    rs.push_back(fake_result(b, true, PairMode::kRectified));
    rs.push_back(fake_result(b, b % 2, PairMode::kPlain));
  }
  const std::vector<BinRates> rates = {localization_rates(rs, PairMode::kRectified),
                                       localization_rates(rs, PairMode::kPlain)};
  const std::string csv = rates_csv(rates);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 2 * kNumBins);
  EXPECT_NE(csv.find("plain,1,1,1,1.000000,0"), std::string::npos);
  EXPECT_NE(csv.find("rectified,17,0,0,,1\n"), std::string::npos);
  const std::string pairs = pairs_csv(rs);
  EXPECT_EQ(std::count(pairs.begin(), pairs.end(), '\n'), 1 + 10);
}

TEST(Report, RerunIsByteIdentical) {
  TempDir dir("report_rerun");
  std::vector<PairResult> rs = {fake_result(0, true), fake_result(4, false)};
  rs[0].pose = RelativePose{rotation_about(Vec3::UnitY(), 3.0), Vec3(1, 0, 0)};
  rs[0].rotation_error_deg = 0.25;
  rs[0].model = "essential";
  const std::vector<BinRates> rates = {localization_rates(rs, PairMode::kRectified)};
  emit_report(rs, rates, dir / "a");
  emit_report(rs, rates, dir / "b");
  for (const char* f : {"pairs.csv", "rates.csv", "rates.svg"}) {
    EXPECT_FALSE(slurp(dir / "a" / f).empty());
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
  }
}

TEST(Report, EmptyCampaignStillWritesHeadersAndAxes) {
  TempDir dir("report_empty");
  emit_report({}, {}, dir.path());
  const std::string pairs = slurp(dir / "pairs.csv");
  const std::string rates = slurp(dir / "rates.csv");
  EXPECT_EQ(std::count(pairs.begin(), pairs.end(), '\n'), 1);
  EXPECT_EQ(rates, "mode,bin,count,localized,rate,empty\n");
  const std::string svg = slurp(dir / "rates.svg");
  EXPECT_NE(svg.find("<svg"), std::string::npos);
  EXPECT_NE(svg.find("difficulty bin"), std::string::npos);
  EXPECT_NE(svg.find("localization rate"), std::string::npos);
}

TEST(Report, MatchesAndRelocalizationTables) {
  const MatchSet m = {{0, 3, 0.1}, {1, 4, 0.2}, {2, 5, 0.3}};
  const std::string csv = matches_csv(m, {1});
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  std::vector<RelocResult> rr(1);
  rr[0].query_id = "q";
  rr[0].ranking = {{1, "d1", 40}, {0, "d0", 3}};
  const std::string rc = relocalization_csv(rr);
  EXPECT_EQ(std::count(rc.begin(), rc.end(), '\n'), 3);
}

class CampaignFixture : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("campaign");
    std::vector<PairManifestEntry> entries;
    const std::vector<std::pair<double, Layout>> specs = {
        {5.0, Layout::kSinglePlane}, {25.0, Layout::kTwoOrthogonal}, {45.0, Layout::kSinglePlane},
        {65.0, Layout::kTwoOrthogonal}};
    for (std::size_t i = 0; i < specs.size(); ++i) {
      const TwoViewCase c = two_view_case(specs[i].first, 3.0, specs[i].second, 40 + i);
      const std::string id = "c" + std::to_string(i);
      entries.push_back(write_case(c, dir_->path() / id, id, to_string(specs[i].second)));
      pairs_->push_back(pair_from(c, id));
    }
    write_manifest(*dir_ / "manifest.jsonl", entries);
  }
  static void TearDownTestSuite() {
    delete dir_;
    pairs_->clear();
  }

  static TempDir* dir_;
  static std::vector<PairData>* pairs_;
};

TempDir* CampaignFixture::dir_ = nullptr;
std::vector<PairData>* CampaignFixture::pairs_ = new std::vector<PairData>;

TEST_F(CampaignFixture, SuccessMeansRotationErrorBelowThreshold) {
  RunConfig cfg;
  for (PairMode mode : {PairMode::kRectified, PairMode::kPlain}) {
    const auto rs = evaluate_pairs(*pairs_, cfg, mode, 7);
    ASSERT_EQ(rs.size(), pairs_->size());
    for (std::size_t i = 0; i < rs.size(); ++i) {
      EXPECT_EQ(rs[i].id, (*pairs_)[i].id);
      EXPECT_EQ(rs[i].mode, mode);
      EXPECT_EQ(rs[i].success, rs[i].rotation_error_deg && *rs[i].rotation_error_deg < 5.0);
      EXPECT_EQ(rs[i].success, rs[i].failed_stage.empty() && rs[i].rotation_error_deg &&
                                   *rs[i].rotation_error_deg < cfg.success_deg);
      EXPECT_EQ(rs[i].bin, difficulty_bin((*pairs_)[i].R_ab));
    }
  }
}

TEST_F(CampaignFixture, ManifestEvaluationMatchesLoadedPairs) {
  RunConfig cfg;
  const Manifest m = load_manifest(*dir_ / "manifest.jsonl");
  std::vector<PairData> loaded;
  for (const auto& e : m.entries) loaded.push_back(load_pair(e));
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    const PairData& rendered = (*pairs_)[i];
    EXPECT_LT((loaded[i].R_ab - rendered.R_ab).norm(), 1e-9);
    ASSERT_EQ(loaded[i].image_a.size(), rendered.image_a.size());
    double worst_px = 0, worst_depth = 0;
    for (std::size_t k = 0; k < rendered.image_a.size(); ++k) {
      worst_px = std::max(worst_px, double(std::abs(loaded[i].image_a[k] - rendered.image_a[k])));
      const double d = rendered.depth_a.values[k];
      if (d > 0) worst_depth = std::max(worst_depth, std::abs(loaded[i].depth_a.values[k] - d) / d);
    }
    EXPECT_LE(worst_px, 0.5 / 255 + 1e-6);
    EXPECT_LT(worst_depth, 1e-6);
  }
  EXPECT_EQ(pairs_csv(evaluate_pairs(m, cfg, PairMode::kRectified, 3)),
            pairs_csv(evaluate_pairs(loaded, cfg, PairMode::kRectified, 3)));
}

TEST_F(CampaignFixture, ThreadCountDoesNotChangeTheReport) {
  RunConfig one, four;
  four.threads = 4;
  const Manifest m = load_manifest(*dir_ / "manifest.jsonl");
  for (PairMode mode : {PairMode::kRectified, PairMode::kPlain}) {
    EXPECT_EQ(pairs_csv(evaluate_pairs(m, one, mode, 11)),
              pairs_csv(evaluate_pairs(m, four, mode, 11)));
  }
}

TEST_F(CampaignFixture, ModesSeeTheSamePairsInTheSameOrder) {
  RunConfig cfg;
  const Manifest m = load_manifest(*dir_ / "manifest.jsonl");
  const auto a = evaluate_pairs(m, cfg, PairMode::kRectified, 5);
  const auto b = evaluate_pairs(m, cfg, PairMode::kPlain, 5);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].id, b[i].id);
    EXPECT_EQ(a[i].bin, b[i].bin);
    EXPECT_DOUBLE_EQ(a[i].gt_angle_deg, b[i].gt_angle_deg);
  }
}

TEST_F(CampaignFixture, CorruptImageFailsAtLoadAndCampaignCompletes) {
  TempDir dir("campaign_corrupt");
  Manifest m = load_manifest(*dir_ / "manifest.jsonl");
  spit(dir / "broken.png", "this is not a png");
  m.entries[1].img_b = dir / "broken.png";
  const auto rs = evaluate_pairs(m, RunConfig{}, PairMode::kRectified, 1);
  ASSERT_EQ(rs.size(), m.entries.size());
  EXPECT_EQ(rs[1].failed_stage, "load");
  EXPECT_FALSE(rs[1].success);
  EXPECT_FALSE(rs[1].failure.empty());
  EXPECT_EQ(rs[1].bin, 2);
  for (std::size_t i : {0u, 2u, 3u}) EXPECT_NE(rs[i].failed_stage, "load");
}

TEST_F(CampaignFixture, SmallRotationPairLocalizesInBothModes) {
  RunConfig cfg;
  for (PairMode mode : {PairMode::kRectified, PairMode::kPlain}) {
    const PairResult r = evaluate_pair((*pairs_)[0], cfg, mode, 1);
    EXPECT_TRUE(r.success) << to_string(mode) << " " << r.failed_stage << " " << r.failure;
    EXPECT_GT(r.inliers, 8u);
  }
}

TEST_F(CampaignFixture, BlankImagesFailAtMatch) {
  PairData p = (*pairs_)[0];
  p.image_a = Image(p.image_a.width(), p.image_a.height(), 0.5f);
  const PairResult r = evaluate_pair(p, RunConfig{}, PairMode::kPlain, 1);
  EXPECT_FALSE(r.success);
  EXPECT_EQ(r.failed_stage, "match");
  EXPECT_FALSE(r.rotation_error_deg.has_value());
}

TEST_F(CampaignFixture, RelocalizeRanksExactCopyFirstAndBreaksTiesByIndex) {
  std::vector<ViewData> views;
  for (const auto& p : *pairs_) {
    views.push_back({p.id + "a", p.image_a, p.depth_a, p.K_a});
    views.push_back({p.id + "b", p.image_b, p.depth_b, p.K_b});
  }
  const std::vector<ViewData> queries = {views[4]};
  const std::vector<ViewData> database = {views[0], views[4], views[4], views[7]};
  const auto rs =
      relocalize(queries, database, RelocMode::kHomography, RunConfig{}, std::nullopt, 9);
  ASSERT_EQ(rs.size(), 1u);
  const auto& rank = rs[0].ranking;
  ASSERT_EQ(rank.size(), database.size());
  EXPECT_EQ(rank[0].database_index, 1);
  EXPECT_EQ(rank[1].database_index, 2);
  EXPECT_EQ(rank[0].inliers, rank[1].inliers);
  EXPECT_GT(rank[0].inliers, rank[2].inliers);
  for (std::size_t i = 1; i < rank.size(); ++i) EXPECT_GE(rank[i - 1].inliers, rank[i].inliers);
  // A zero-baseline copy leaves the fundamental matrix undetermined, so it
  // scores nothing in fundamental mode; ties still resolve by index.
  const auto fr =
      relocalize(queries, database, RelocMode::kFundamental, RunConfig{}, std::nullopt, 9);
  const auto& frank = fr[0].ranking;
  for (std::size_t i = 1; i < frank.size(); ++i) {
    EXPECT_GE(frank[i - 1].inliers, frank[i].inliers);
    if (frank[i - 1].inliers == frank[i].inliers) {
      EXPECT_LT(frank[i - 1].database_index, frank[i].database_index);
    }
  }
  EXPECT_EQ(thrown_code([&] {
              relocalize({}, database, RelocMode::kHomography, RunConfig{}, std::nullopt, 1);
            }),
            ErrorCode::kInvalidArgument);
}

}  // namespace
}  // namespace unwarp
