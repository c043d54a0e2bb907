#include <Eigen/Geometry>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "unwarp/error.hpp"
#include "unwarp/evaluation.hpp"

namespace unwarp {
namespace {

std::string fmt(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// Quotes fields containing separators so ids with commas survive.
std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorCode::kIo, "write failed: " + path.string());
}

}  // namespace

std::string pairs_csv(const std::vector<PairResult>& results) {
  std::ostringstream o;
  o << "id,scene,mode,bin,gt_angle_deg,features_a,features_b,raw_matches,inliers,model,"
       "qw,qx,qy,qz,tx,ty,tz,rotation_error_deg,success,failed_stage\n";
  for (const auto& r : results) {
    o << csv_field(r.id) << ',' << csv_field(r.scene) << ',' << to_string(r.mode) << ',' << r.bin
      << ',' << fmt(r.gt_angle_deg) << ',' << r.features_a << ',' << r.features_b << ','
      << r.raw_matches << ',' << r.inliers << ',' << r.model << ',';
    if (r.pose) {
      Eigen::Quaterniond q(r.pose->R);
      q.normalize();
      if (q.w() < 0) q.coeffs() *= -1;
      o << fmt(q.w(), 9) << ',' << fmt(q.x(), 9) << ',' << fmt(q.y(), 9) << ',' << fmt(q.z(), 9)
        << ',' << fmt(r.pose->t.x(), 9) << ',' << fmt(r.pose->t.y(), 9) << ','
        << fmt(r.pose->t.z(), 9) << ',';
    } else {
      o << ",,,,,,,";
    }
    o << (r.rotation_error_deg ? fmt(*r.rotation_error_deg) : "") << ',' << (r.success ? 1 : 0)
      << ',' << r.failed_stage << '\n';
  }
  return o.str();
}

std::string rates_csv(const std::vector<BinRates>& rates) {
  std::ostringstream o;
  o << "mode,bin,count,localized,rate,empty\n";
  for (const auto& m : rates) {
    for (int k = 0; k < kNumBins; ++k) {
      const auto& b = m.bins[k];
      o << to_string(m.mode) << ',' << k << ',' << b.count << ',' << b.localized << ','
        << (b.empty ? "" : fmt(b.rate)) << ',' << (b.empty ? 1 : 0) << '\n';
    }
  }
  return o.str();
}

std::string rates_svg(const std::vector<BinRates>& rates) {
  constexpr double W = 640, H = 400, left = 60, right = 150, top = 20, bottom = 50;
  const double pw = W - left - right, ph = H - top - bottom;
  const auto px = [&](double bin) { return left + pw * bin / (kNumBins - 1); };
  const auto py = [&](double rate) { return top + ph * (1.0 - rate); };
  static const char* colours[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" viewBox=\"0 0 " << W << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (int i = 0; i <= 10; ++i) {
    const double y = py(i / 10.0);
    o << "<line x1=\"" << fmt(left, 1) << "\" y1=\"" << fmt(y, 1) << "\" x2=\"" << fmt(left + pw, 1)
      << "\" y2=\"" << fmt(y, 1) << "\" stroke=\"#e0e0e0\"/>\n";
    o << "<text x=\"" << fmt(left - 6, 1) << "\" y=\"" << fmt(y + 4, 1)
      << "\" text-anchor=\"end\">" << fmt(i / 10.0, 1) << "</text>\n";
  }
  for (int k = 0; k < kNumBins; ++k) {
    o << "<text x=\"" << fmt(px(k), 1) << "\" y=\"" << fmt(top + ph + 16, 1)
      << "\" text-anchor=\"middle\">" << k << "</text>\n";
  }
  o << "<line x1=\"" << fmt(left, 1) << "\" y1=\"" << fmt(top + ph, 1) << "\" x2=\""
    << fmt(left + pw, 1) << "\" y2=\"" << fmt(top + ph, 1) << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << fmt(left, 1) << "\" y1=\"" << fmt(top, 1) << "\" x2=\"" << fmt(left, 1)
    << "\" y2=\"" << fmt(top + ph, 1) << "\" stroke=\"black\"/>\n";
  o << "<text x=\"" << fmt(left + pw / 2, 1) << "\" y=\"" << fmt(H - 12, 1)
    << "\" text-anchor=\"middle\">difficulty bin (10 deg steps)</text>\n";
  o << "<text x=\"16\" y=\"" << fmt(top + ph / 2, 1) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
    << fmt(top + ph / 2, 1) << ")\">localization rate</text>\n";

  for (std::size_t m = 0; m < rates.size(); ++m) {
    const char* colour = colours[m % 4];
    // One polyline per run of occupied bins.
    std::string points;
    const auto flush = [&] {
      if (!points.empty())
        o << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\" points=\""
          << points << "\"/>\n";
      points.clear();
    };
    for (int k = 0; k < kNumBins; ++k) {
      const auto& b = rates[m].bins[k];
      if (b.empty) {
        flush();
        continue;
      }
      if (!points.empty()) points += ' ';
      points += fmt(px(k), 1) + "," + fmt(py(b.rate), 1);
      o << "<circle cx=\"" << fmt(px(k), 1) << "\" cy=\"" << fmt(py(b.rate), 1)
        << "\" r=\"3\" fill=\"" << colour << "\"/>\n";
    }
    flush();
    const double ly = top + 14 + 18 * m;
    o << "<line x1=\"" << fmt(left + pw + 14, 1) << "\" y1=\"" << fmt(ly, 1) << "\" x2=\""
      << fmt(left + pw + 38, 1) << "\" y2=\"" << fmt(ly, 1) << "\" stroke=\"" << colour
      << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << fmt(left + pw + 44, 1) << "\" y=\"" << fmt(ly + 4, 1) << "\">"
      << xml_escape(to_string(rates[m].mode)) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::string matches_csv(const MatchSet& matches, const std::vector<int>& inliers) {
  std::vector<char> flag(matches.size(), 0);
  for (int i : inliers)
    if (i >= 0 && static_cast<std::size_t>(i) < flag.size()) flag[i] = 1;
  std::ostringstream o;
  o << "idx_a,idx_b,distance,inlier\n";
  for (std::size_t i = 0; i < matches.size(); ++i)
    o << matches[i].query << ',' << matches[i].train << ',' << fmt(matches[i].distance) << ','
      << int(flag[i]) << '\n';
  return o.str();
}

std::string relocalization_csv(const std::vector<RelocResult>& results) {
  std::ostringstream o;
  o << "query,rank,database,inliers\n";
  for (const auto& r : results)
    for (std::size_t k = 0; k < r.ranking.size(); ++k)
      o << csv_field(r.query_id) << ',' << k + 1 << ',' << csv_field(r.ranking[k].id) << ','
        << r.ranking[k].inliers << '\n';
  return o.str();
}

void emit_report(const std::vector<PairResult>& results, const std::vector<BinRates>& rates,
                 const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorCode::kIo, "cannot create " + dir.string() + ": " + ec.message());
  write_text(dir / "pairs.csv", pairs_csv(results));
  write_text(dir / "rates.csv", rates_csv(rates));
  write_text(dir / "rates.svg", rates_svg(rates));
}

}  // namespace unwarp
