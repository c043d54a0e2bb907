#include "unwarp/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "unwarp/error.hpp"

namespace unwarp {
namespace {

using nlohmann::json;

void check(bool ok, const std::string& field, const std::string& rule) {
  if (!ok) fail(ErrorCode::kValidation, "config: " + field + " " + rule);
}

void angle(double v, const char* field) {
  check(v > 0 && v <= 90, field, "must lie in (0, 90] degrees");
}

void fraction(double v, const char* field) { check(v > 0 && v < 1, field, "must lie in (0, 1)"); }

template <typename T>
void take(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void RunConfig::validate() const {
  check(normal_window >= 3 && normal_window % 2 == 1, "normal_window", "must be odd and >= 3");
  check(clusters >= 1 && clusters <= 3, "clusters", "must lie in [1, 3]");
  check(clustering == "orthogonal" || clustering == "histogram", "clustering",
        "must be 'orthogonal' or 'histogram'");
  check(clustering != "orthogonal" || clusters == 3, "clusters",
        "must be 3 in orthogonal mode (the frame has three axes)");
  angle(assign_deg, "assign_deg");
  angle(glancing_deg, "glancing_deg");
  angle(success_deg, "success_deg");
  angle(ground_gate_deg, "ground_gate_deg");
  fraction(min_patch_frac, "min_patch_frac");
  fraction(ratio, "ratio");
  fraction(planar_ratio, "planar_ratio");
  fraction(confidence, "confidence");
  check(max_output_dim > 0, "max_output_dim", "must be positive");
  check(homography_px > 0, "homography_px", "must be positive");
  check(sampson_px > 0, "sampson_px", "must be positive");
  check(max_features > 0, "max_features", "must be positive");
  check(max_iters > 0, "max_iters", "must be positive");
  check(threads >= 1, "threads", "must be at least 1");
  check(extractor == "reference" || extractor == "reference_binary", "extractor",
        "must be 'reference' or 'reference_binary'");
  if (ground_axis) {
    check(ground_axis->allFinite() && ground_axis->norm() > 1e-9, "ground_axis",
          "must be a non-zero vector");
  }
}

RectifyConfig RunConfig::rectify_config() const {
  RectifyConfig r;
  r.normal_window = normal_window;
  r.clustering = clustering == "histogram" ? ClusteringMode::kHistogram : ClusteringMode::kOrthogonal;
  r.orthogonal.assign_deg = assign_deg;
  r.histogram.assign_deg = assign_deg;
  r.histogram.max_axes = clusters;
  r.min_patch_frac = min_patch_frac;
  r.glancing_max_deg = glancing_deg;
  r.max_output_dim = max_output_dim;
  r.ground_axis = ground_axis;
  r.ground_gate_deg = ground_gate_deg;
  r.threads = threads;
  return r;
}

ReferenceParams RunConfig::reference_params() const {
  ReferenceParams p;
  p.max_features = max_features;
  return p;
}

TwoViewOptions RunConfig::two_view_options(std::uint64_t pair_seed) const {
  TwoViewOptions o;
  o.sampson_px = sampson_px;
  o.planar_px = 2.0 * sampson_px;
  o.planar_ratio = planar_ratio;
  o.confidence = confidence;
  o.max_iters = max_iters;
  o.seed = pair_seed;
  return o;
}

RansacOptions RunConfig::homography_options(std::uint64_t pair_seed) const {
  return {homography_px, confidence, max_iters, pair_seed};
}

RansacOptions RunConfig::fundamental_options(std::uint64_t pair_seed) const {
  return {sampson_px, confidence, max_iters, pair_seed};
}

std::string to_json(const RunConfig& c) {
  json j;
  j["normal_window"] = c.normal_window;
  j["clusters"] = c.clusters;
  j["assign_deg"] = c.assign_deg;
  j["glancing_deg"] = c.glancing_deg;
  j["min_patch_frac"] = c.min_patch_frac;
  j["max_output_dim"] = c.max_output_dim;
  j["ratio"] = c.ratio;
  j["mutual"] = c.mutual;
  j["homography_px"] = c.homography_px;
  j["sampson_px"] = c.sampson_px;
  j["success_deg"] = c.success_deg;
  j["seed"] = c.seed;
  j["clustering"] = c.clustering;
  j["extractor"] = c.extractor;
  j["max_features"] = c.max_features;
  j["ground_gate_deg"] = c.ground_gate_deg;
  j["ground_axis"] = c.ground_axis
                         ? json::array({c.ground_axis->x(), c.ground_axis->y(), c.ground_axis->z()})
                         : json(nullptr);
  j["planar_ratio"] = c.planar_ratio;
  j["confidence"] = c.confidence;
  j["max_iters"] = c.max_iters;
  j["threads"] = c.threads;
  return j.dump(2);
}

RunConfig config_from_json(const std::string& text, const RunConfig& base) {
  static const std::set<std::string> known{
      "normal_window", "clusters",   "assign_deg",   "glancing_deg", "min_patch_frac",
      "max_output_dim", "ratio",     "mutual",       "homography_px", "sampson_px",
      "success_deg",   "seed",       "clustering",   "extractor",    "max_features",
      "ground_gate_deg", "ground_axis", "planar_ratio", "confidence", "max_iters",
      "threads"};
  RunConfig c = base;
  try {
    const json j = json::parse(text);
    if (!j.is_object()) fail(ErrorCode::kParse, "config: expected a JSON object");
    for (const auto& [key, value] : j.items()) {
      if (!known.count(key)) fail(ErrorCode::kParse, "config: unknown key '" + key + "'");
    }
    take(j, "normal_window", c.normal_window);
    take(j, "clusters", c.clusters);
    take(j, "assign_deg", c.assign_deg);
    take(j, "glancing_deg", c.glancing_deg);
    take(j, "min_patch_frac", c.min_patch_frac);
    take(j, "max_output_dim", c.max_output_dim);
    take(j, "ratio", c.ratio);
    take(j, "mutual", c.mutual);
    take(j, "homography_px", c.homography_px);
    take(j, "sampson_px", c.sampson_px);
    take(j, "success_deg", c.success_deg);
    take(j, "seed", c.seed);
    take(j, "clustering", c.clustering);
    take(j, "extractor", c.extractor);
    take(j, "max_features", c.max_features);
    take(j, "ground_gate_deg", c.ground_gate_deg);
    if (j.contains("ground_axis")) {
      const auto& g = j.at("ground_axis");
      if (g.is_null()) {
        c.ground_axis.reset();
      } else {
        const auto v = g.get<std::vector<double>>();
        if (v.size() != 3) fail(ErrorCode::kParse, "config: ground_axis needs 3 values");
        c.ground_axis = Vec3(v[0], v[1], v[2]);
      }
    }
    take(j, "planar_ratio", c.planar_ratio);
    take(j, "confidence", c.confidence);
    take(j, "max_iters", c.max_iters);
    take(j, "threads", c.threads);
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, std::string("config: ") + e.what());
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path, const RunConfig& base) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str(), base);
}

}  // namespace unwarp
