#include "unwarp/manifest.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "unwarp/error.hpp"

namespace unwarp {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string where(const fs::path& path, int line) {
  return path.string() + ":" + std::to_string(line) + ": ";
}

Intrinsics intrinsics_from(const json& j) {
  Intrinsics K;
  K.fx = j.at("fx").get<double>();
  K.fy = j.at("fy").get<double>();
  K.cx = j.at("cx").get<double>();
  K.cy = j.at("cy").get<double>();
  K.width = j.at("width").get<int>();
  K.height = j.at("height").get<int>();
  K.validate();
  return K;
}

json intrinsics_to(const Intrinsics& K) {
  return {{"fx", K.fx}, {"fy", K.fy}, {"cx", K.cx},
          {"cy", K.cy}, {"width", K.width}, {"height", K.height}};
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

// Both paths are taken relative to the working directory when not absolute.
std::string relative_to(const fs::path& base, const fs::path& p) {
  std::error_code ec;
  const fs::path rel = fs::relative(fs::absolute(p), fs::absolute(base), ec);
  return ec || rel.empty() ? p.generic_string() : rel.generic_string();
}

// Calls fn(json, line_number) for each non-blank line.
template <typename Fn>
void for_each_line(const fs::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  std::string text;
  int line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::exception& e) {
      fail(ErrorCode::kParse, where(path, line) + e.what());
    }
    if (!j.is_object()) fail(ErrorCode::kParse, where(path, line) + "expected a JSON object");
    fn(j, line);
  }
}

void require_file(const fs::path& manifest, int line, const std::string& id, const fs::path& p) {
  if (!fs::is_regular_file(p))
    fail(ErrorCode::kValidation,
         where(manifest, line) + "entry '" + id + "': missing file " + p.string());
}

void write_lines(const fs::path& path, const std::vector<json>& lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
  for (const auto& j : lines) out << j.dump() << '\n';
  if (!out) fail(ErrorCode::kIo, "write failed: " + path.string());
}

}  // namespace

Manifest load_manifest(const fs::path& path, bool check_files) {
  Manifest m;
  const fs::path base = path.parent_path();
  for_each_line(path, [&](const json& j, int line) {
    PairManifestEntry e;
    e.line = line;
    e.id = j.value("id", "pair" + std::to_string(line));
    try {
      e.img_a = resolve(base, j.at("img_a").get<std::string>());
      e.img_b = resolve(base, j.at("img_b").get<std::string>());
      e.depth_a = resolve(base, j.at("depth_a").get<std::string>());
      e.depth_b = resolve(base, j.at("depth_b").get<std::string>());
      e.K_a = intrinsics_from(j.at("K_a"));
      e.K_b = intrinsics_from(j.at("K_b"));
      const auto q = j.at("q_ab").get<std::vector<double>>();
      const auto t = j.at("t_ab").get<std::vector<double>>();
      if (q.size() != 4 || t.size() != 3) throw std::invalid_argument("q_ab needs 4 and t_ab 3 values");
      e.q_ab = Eigen::Quaterniond(q[0], q[1], q[2], q[3]);
      e.t_ab = Vec3(t[0], t[1], t[2]);
      e.scene = j.at("scene").get<std::string>();
      e.depth_scale = j.value("depth_scale", e.depth_scale);
    } catch (const json::exception& ex) {
      fail(ErrorCode::kParse, where(path, line) + "entry '" + e.id + "': " + ex.what());
    } catch (const std::invalid_argument& ex) {
      fail(ErrorCode::kParse, where(path, line) + "entry '" + e.id + "': " + ex.what());
    } catch (const Error& ex) {
      fail(ErrorCode::kValidation, where(path, line) + "entry '" + e.id + "': " + ex.what());
    }
    const double qn = e.q_ab.coeffs().norm();
    if (!std::isfinite(qn) || std::abs(qn - 1.0) > 1e-6)
      fail(ErrorCode::kValidation, where(path, line) + "entry '" + e.id +
                                       "': quaternion is not unit (norm " + std::to_string(qn) + ")");
    if (!e.t_ab.allFinite() || !(e.depth_scale > 0))
      fail(ErrorCode::kValidation, where(path, line) + "entry '" + e.id + "': invalid t_ab or depth_scale");
    if (check_files) {
      for (const auto& p : {e.img_a, e.img_b, e.depth_a, e.depth_b}) require_file(path, line, e.id, p);
    }
    m.entries.push_back(std::move(e));
  });
  if (m.entries.empty()) m.warnings.push_back(path.string() + ": manifest has no entries");
  return m;
}

void write_manifest(const fs::path& path, const std::vector<PairManifestEntry>& entries) {
  const fs::path base = path.parent_path();
  std::vector<json> lines;
  for (const auto& e : entries) {
    json j;
    j["id"] = e.id;
    j["img_a"] = relative_to(base, e.img_a);
    j["img_b"] = relative_to(base, e.img_b);
    j["depth_a"] = relative_to(base, e.depth_a);
    j["depth_b"] = relative_to(base, e.depth_b);
    j["K_a"] = intrinsics_to(e.K_a);
    j["K_b"] = intrinsics_to(e.K_b);
    j["q_ab"] = {e.q_ab.w(), e.q_ab.x(), e.q_ab.y(), e.q_ab.z()};
    j["t_ab"] = {e.t_ab.x(), e.t_ab.y(), e.t_ab.z()};
    j["scene"] = e.scene;
    j["depth_scale"] = e.depth_scale;
    lines.push_back(std::move(j));
  }
  write_lines(path, lines);
}

std::vector<ViewManifestEntry> load_view_list(const fs::path& path, bool check_files) {
  std::vector<ViewManifestEntry> out;
  const fs::path base = path.parent_path();
  for_each_line(path, [&](const json& j, int line) {
    ViewManifestEntry e;
    e.line = line;
    e.id = j.value("id", "view" + std::to_string(line));
    try {
      e.img = resolve(base, j.at("img").get<std::string>());
      e.depth = resolve(base, j.at("depth").get<std::string>());
      e.K = intrinsics_from(j.at("K"));
      e.depth_scale = j.value("depth_scale", e.depth_scale);
    } catch (const json::exception& ex) {
      fail(ErrorCode::kParse, where(path, line) + "entry '" + e.id + "': " + ex.what());
    } catch (const Error& ex) {
      fail(ErrorCode::kValidation, where(path, line) + "entry '" + e.id + "': " + ex.what());
    }
    if (check_files) {
      require_file(path, line, e.id, e.img);
      require_file(path, line, e.id, e.depth);
    }
    out.push_back(std::move(e));
  });
  return out;
}

void write_view_list(const fs::path& path, const std::vector<ViewManifestEntry>& entries) {
  const fs::path base = path.parent_path();
  std::vector<json> lines;
  for (const auto& e : entries) {
    lines.push_back({{"id", e.id},
                     {"img", relative_to(base, e.img)},
                     {"depth", relative_to(base, e.depth)},
                     {"K", intrinsics_to(e.K)},
                     {"depth_scale", e.depth_scale}});
  }
  write_lines(path, lines);
}

}  // namespace unwarp
