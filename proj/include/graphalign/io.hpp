#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "graphalign/bench.hpp"
#include "graphalign/core.hpp"
#include "graphalign/fusion.hpp"
#include "graphalign/geometry.hpp"
#include "graphalign/graph.hpp"
#include "graphalign/safa.hpp"
#include "graphalign/scene.hpp"

namespace graphalign {
namespace detail {

inline std::string read_all(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), ErrorKind::io, "cannot open " + path);
  std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  require(!f.bad(), ErrorKind::io, "failed reading " + path);
  return data;
}

inline void write_all(const std::string& path, const std::string& data) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(f.good(), ErrorKind::io, "cannot write " + path);
  f.write(data.data(), std::streamsize(data.size()));
  f.flush();
  require(f.good(), ErrorKind::io, "failed writing " + path);
}

inline void append_u32(std::string& buf, std::uint32_t v) {
  char tmp[4];
  std::memcpy(tmp, &v, 4);
  buf.append(tmp, 4);
}

inline void append_f32(std::string& buf, double v) {
  const float x = float(v);
  char tmp[4];
  std::memcpy(tmp, &x, 4);
  buf.append(tmp, 4);
}

class Cursor {
 public:
  Cursor(const std::string& data, std::string path) : data_(data), path_(std::move(path)) {}

  void expect_magic(const char* magic) {
    require(data_.size() >= pos_ + 4 && std::memcmp(data_.data() + pos_, magic, 4) == 0,
            ErrorKind::format, path_ + ": bad magic, expected " + std::string(magic, 4));
    pos_ += 4;
  }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v;
    std::memcpy(&v, data_.data() + pos_, 4);
    pos_ += 4;
    return v;
  }

  double f32() {
    need(4);
    float v;
    std::memcpy(&v, data_.data() + pos_, 4);
    pos_ += 4;
    return double(v);
  }

  std::uint8_t u8() {
    need(1);
    return std::uint8_t(data_[pos_++]);
  }

  void finish() const {
    require(pos_ == data_.size(), ErrorKind::format, path_ + ": trailing data");
  }

 private:
  void need(std::size_t n) {
    require(pos_ + n <= data_.size(), ErrorKind::format, path_ + ": truncated file");
  }

  const std::string& data_;
  std::string path_;
  std::size_t pos_ = 0;
};

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

inline std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> out;
  for (std::string_view line : split(text, '\n')) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    out.push_back(line);
  }
  if (!out.empty() && out.back().empty()) out.pop_back();
  return out;
}

inline long parse_int(std::string_view s, const std::string& what) {
  long v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  require(res.ec == std::errc() && res.ptr == s.data() + s.size(), ErrorKind::format,
          "bad integer field in " + what + ": '" + std::string(s) + "'");
  return v;
}

}  // namespace detail

// --- point cloud (GAPC) ---

inline void write_point_cloud(const std::string& path, const PointSet& points) {
  points.validate();
  std::string buf;
  const int n = points.size(), c = points.channels();
  buf.reserve(12 + std::size_t(n) * (3 + c + 1) * 4);
  buf.append("GAPC", 4);
  detail::append_u32(buf, std::uint32_t(n));
  detail::append_u32(buf, std::uint32_t(c));
  for (int i = 0; i < n; ++i) {
    for (int a = 0; a < 3; ++a) detail::append_f32(buf, points.coords(i, a));
    for (int ch = 0; ch < c; ++ch) detail::append_f32(buf, points.features(i, ch));
    detail::append_f32(buf, double(points.labels[std::size_t(i)]));
  }
  detail::write_all(path, buf);
}

inline PointSet read_point_cloud(const std::string& path) {
  const std::string data = detail::read_all(path);
  detail::Cursor cur(data, path);
  cur.expect_magic("GAPC");
  const std::uint32_t n = cur.u32();
  const std::uint32_t c = cur.u32();
  PointSet points;
  points.coords.resize(n, 3);
  points.features.resize(n, c);
  points.labels.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    for (int a = 0; a < 3; ++a) points.coords(i, a) = cur.f32();
    for (std::uint32_t ch = 0; ch < c; ++ch) points.features(i, ch) = cur.f32();
    points.labels[i] = int(std::lround(cur.f32()));
  }
  cur.finish();
  points.validate();
  return points;
}

// --- image feature map (GAFM) ---

inline void write_feature_map(const std::string& path, const ImageFeatureMap& fmap) {
  fmap.validate();
  std::string buf;
  buf.reserve(16 + fmap.data.size() * 4);
  buf.append("GAFM", 4);
  detail::append_u32(buf, std::uint32_t(fmap.height));
  detail::append_u32(buf, std::uint32_t(fmap.width));
  detail::append_u32(buf, std::uint32_t(fmap.channels));
  for (double v : fmap.data) detail::append_f32(buf, v);
  detail::write_all(path, buf);
}

inline ImageFeatureMap read_feature_map(const std::string& path) {
  const std::string data = detail::read_all(path);
  detail::Cursor cur(data, path);
  cur.expect_magic("GAFM");
  const std::uint32_t h = cur.u32();
  const std::uint32_t w = cur.u32();
  const std::uint32_t c = cur.u32();
  require(h > 0 && w > 0 && c > 0, ErrorKind::format, path + ": zero dimension");
  ImageFeatureMap fmap(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));
  for (double& v : fmap.data) v = cur.f32();
  cur.finish();
  fmap.validate();
  return fmap;
}

// --- neighbor graph (GAGR) ---

inline void write_graph(const std::string& path, const NeighborGraph& graph) {
  std::string buf;
  const int n = graph.n(), k = graph.k();
  buf.reserve(12 + std::size_t(n) * k * 5);
  buf.append("GAGR", 4);
  detail::append_u32(buf, std::uint32_t(n));
  detail::append_u32(buf, std::uint32_t(k));
  for (std::int32_t idx : graph.indices.v) detail::append_u32(buf, std::uint32_t(idx));
  for (std::uint8_t b : graph.valid.v) buf.push_back(char(b ? 1 : 0));
  detail::write_all(path, buf);
}

inline NeighborGraph read_graph(const std::string& path) {
  const std::string data = detail::read_all(path);
  detail::Cursor cur(data, path);
  cur.expect_magic("GAGR");
  const std::uint32_t n = cur.u32();
  const std::uint32_t k = cur.u32();
  NeighborGraph graph;
  graph.indices = IndexMatrix(int(n), int(k));
  graph.valid = BoolMask(int(n), int(k));
  for (auto& idx : graph.indices.v) {
    const std::uint32_t v = cur.u32();
    require(v <= 0x7fffffffu, ErrorKind::format, path + ": index out of range");
    idx = std::int32_t(v);
  }
  for (auto& b : graph.valid.v) b = cur.u8() ? 1 : 0;
  cur.finish();
  return graph;
}

// --- attention params (GASA) ---

inline void write_attention_params(const std::string& path, const AttentionParams& params) {
  params.validate();
  const int c = params.channels();
  std::string buf;
  buf.reserve(12 + std::size_t(3) * c * c * 4);
  buf.append("GASA", 4);
  detail::append_u32(buf, std::uint32_t(c));
  detail::append_u32(buf, std::uint32_t(params.heads));
  for (const RowMatrixXd* m : {&params.w_q, &params.w_k, &params.w_v})
    for (int i = 0; i < c; ++i)
      for (int j = 0; j < c; ++j) detail::append_f32(buf, (*m)(i, j));
  detail::write_all(path, buf);
}

inline AttentionParams read_attention_params(const std::string& path) {
  const std::string data = detail::read_all(path);
  detail::Cursor cur(data, path);
  cur.expect_magic("GASA");
  const std::uint32_t c = cur.u32();
  const std::uint32_t h = cur.u32();
  AttentionParams params;
  params.heads = int(h);
  for (RowMatrixXd* m : {&params.w_q, &params.w_k, &params.w_v}) {
    m->resize(c, c);
    for (std::uint32_t i = 0; i < c; ++i)
      for (std::uint32_t j = 0; j < c; ++j) (*m)(i, j) = cur.f32();
  }
  cur.finish();
  params.validate();
  return params;
}

// --- calibration text ---

inline void write_calibration(const std::string& path, const CalibrationRig& rig) {
  std::string out;
  auto append_values = [&out](const char* key, const double* v, int count) {
    out += key;
    out += ':';
    for (int i = 0; i < count; ++i) {
      out += ' ';
      out += format_double(v[i]);
    }
    out += '\n';
  };
  // Matrices are stored column-major by Eigen; emit row-major explicitly.
  double km[9], rm[9];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      km[i * 3 + j] = rig.intrinsics(i, j);
      rm[i * 3 + j] = rig.rotation(i, j);
    }
  append_values("INTRINSICS", km, 9);
  append_values("ROTATION", rm, 9);
  append_values("TRANSLATION", rig.translation.data(), 3);
  const double s = rig.scale;
  append_values("SCALE", &s, 1);
  out += "IMAGE: " + std::to_string(rig.image_width) + ' ' + std::to_string(rig.image_height) +
         '\n';
  detail::write_all(path, out);
}

inline CalibrationRig read_calibration(const std::string& path) {
  const std::string data = detail::read_all(path);
  bool seen[5] = {false, false, false, false, false};
  double km[9], rm[9], tr[3], sc = 0.0;
  long iw = 0, ih = 0;
  for (std::string_view line : detail::lines_of(data)) {
    if (line.empty()) continue;
    const std::size_t colon = line.find(':');
    require(colon != std::string_view::npos, ErrorKind::format,
            path + ": expected 'KEY: values' but got '" + std::string(line) + "'");
    const std::string_view key = line.substr(0, colon);
    std::vector<std::string_view> vals;
    for (std::string_view tok : detail::split(line.substr(colon + 1), ' '))
      if (!tok.empty()) vals.push_back(tok);
    auto parse_into = [&](double* dst, std::size_t count) {
      require(vals.size() == count, ErrorKind::format,
              path + ": " + std::string(key) + " needs " + std::to_string(count) + " values");
      for (std::size_t i = 0; i < count; ++i) dst[i] = parse_double(vals[i]);
    };
    if (key == "INTRINSICS") {
      parse_into(km, 9);
      seen[0] = true;
    } else if (key == "ROTATION") {
      parse_into(rm, 9);
      seen[1] = true;
    } else if (key == "TRANSLATION") {
      parse_into(tr, 3);
      seen[2] = true;
    } else if (key == "SCALE") {
      parse_into(&sc, 1);
      seen[3] = true;
    } else if (key == "IMAGE") {
      require(vals.size() == 2, ErrorKind::format, path + ": IMAGE needs width and height");
      iw = detail::parse_int(vals[0], path);
      ih = detail::parse_int(vals[1], path);
      seen[4] = true;
    } else {
      fail(ErrorKind::format, path + ": unknown key '" + std::string(key) + "'");
    }
  }
  static const char* const names[5] = {"INTRINSICS", "ROTATION", "TRANSLATION", "SCALE", "IMAGE"};
  for (int i = 0; i < 5; ++i)
    require(seen[i], ErrorKind::format, path + ": missing key " + names[i]);

  Eigen::Matrix3d k, r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      k(i, j) = km[i * 3 + j];
      r(i, j) = rm[i * 3 + j];
    }
  try {
    return CalibrationRig::make(k, r, Eigen::Vector3d(tr[0], tr[1], tr[2]), sc, int(iw),
                                int(ih));
  } catch (const Error& e) {
    fail(ErrorKind::format, path + ": " + e.what());
  }
}

// --- ground truth CSV ---

inline constexpr const char* kGroundTruthHeader = "index,class,px,py";

inline void write_ground_truth(const std::string& path, const std::vector<GroundTruthRow>& rows) {
  std::string out = kGroundTruthHeader;
  out += '\n';
  for (const auto& row : rows) {
    out += std::to_string(row.index);
    out += ',';
    out += std::to_string(row.cls);
    out += ',';
    out += format_double(row.px);
    out += ',';
    out += format_double(row.py);
    out += '\n';
  }
  detail::write_all(path, out);
}

inline std::vector<GroundTruthRow> read_ground_truth(const std::string& path) {
  const std::string data = detail::read_all(path);
  const auto lines = detail::lines_of(data);
  require(!lines.empty() && lines[0] == kGroundTruthHeader, ErrorKind::format,
          path + ": missing header '" + std::string(kGroundTruthHeader) + "'");
  std::vector<GroundTruthRow> rows;
  rows.reserve(lines.size() - 1);
  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (lines[li].empty()) continue;
    const auto cells = detail::split(lines[li], ',');
    require(cells.size() == 4, ErrorKind::format,
            path + ": row " + std::to_string(li) + " needs 4 fields");
    GroundTruthRow row;
    row.index = int(detail::parse_int(cells[0], path));
    row.cls = int(detail::parse_int(cells[1], path));
    row.px = parse_double(cells[2]);
    row.py = parse_double(cells[3]);
    rows.push_back(row);
  }
  return rows;
}

// --- alignment report (structured text) ---

/// Writes the run report. The [timing] section always comes last so
/// determinism comparisons can strip it wholesale; everything above it is a
/// pure function of inputs and seeds.
inline void write_alignment_report(
    const std::string& path, const AlignmentReport& report,
    const std::vector<std::pair<std::string, std::string>>& config_echo, int workers) {
  std::string out = "report_version: 1\n\n[config]\n";
  out += "method = ";
  out += method_name(report.method);
  out += '\n';
  for (const auto& [key, value] : config_echo) {
    out += key;
    out += " = ";
    out += value;
    out += '\n';
  }
  out += "\n[complexity]\n";
  out += "surviving = " + std::to_string(report.surviving) + '\n';
  out += "safa_macs_estimated = " + std::to_string(report.safa_macs_estimated) + '\n';
  out += "safa_macs_instrumented = " + std::to_string(report.safa_macs_instrumented) + '\n';
  out += "cross_attention_macs = " + std::to_string(report.cross_attention_macs) + '\n';
  out += "mac_ratio = " + format_double(report.mac_ratio) + '\n';
  out += "bypassed_points = " + std::to_string(report.bypassed_points) + '\n';
  out += "\n[metrics]\n";
  out += "bucket points labeled accuracy cosine\n";
  for (int b = 0; b < kBucketCount; ++b) {
    const BucketMetrics& m = report.buckets[b];
    out += kBucketNames[b];
    out += ' ' + std::to_string(m.points) + ' ' + std::to_string(m.labeled) + ' ' +
           format_double(m.accuracy) + ' ' + format_double(m.cosine) + '\n';
  }
  out += "\n[timing]\n";
  out += "workers = " + std::to_string(workers) + '\n';
  out += "project_ms = " + format_double(report.timings.project_ms) + '\n';
  out += "graph_ms = " + format_double(report.timings.graph_ms) + '\n';
  out += "fuse_ms = " + format_double(report.timings.fuse_ms) + '\n';
  out += "attention_ms = " + format_double(report.timings.attention_ms) + '\n';
  out += "max_ms = " + format_double(report.timings.max_ms) + '\n';
  detail::write_all(path, out);
}

// --- sweep CSV ---

inline constexpr const char* kSweepHeader =
    "method,k,chunk,heads,bucket,accuracy,cosine,n,n_labeled,"
    "project_ms,graph_ms,fuse_ms,attention_ms,max_ms";

struct SweepCsv {
  std::vector<std::string> comments;  // leading '# ...' lines, verbatim
  std::vector<SweepRow> rows;
};

inline void write_sweep_csv(const std::string& path, const SweepCsv& csv) {
  std::string out;
  for (const auto& c : csv.comments) {
    out += c;
    out += '\n';
  }
  out += kSweepHeader;
  out += '\n';
  for (const SweepRow& r : csv.rows) {
    out += method_name(r.method);
    out += ',' + std::to_string(r.k) + ',' + std::to_string(r.chunk) + ',' +
           std::to_string(r.heads) + ',';
    out += kBucketNames[r.bucket];
    out += ',' + format_double(r.accuracy) + ',' + format_double(r.cosine) + ',' +
           std::to_string(r.n) + ',' + std::to_string(r.n_labeled) + ',' +
           format_double(r.project_ms) + ',' + format_double(r.graph_ms) + ',' +
           format_double(r.fuse_ms) + ',' + format_double(r.attention_ms) + ',' +
           format_double(r.max_ms) + '\n';
  }
  detail::write_all(path, out);
}

inline SweepCsv read_sweep_csv(const std::string& path) {
  const std::string data = detail::read_all(path);
  const auto lines = detail::lines_of(data);
  SweepCsv csv;
  std::size_t li = 0;
  while (li < lines.size() && !lines[li].empty() && lines[li][0] == '#')
    csv.comments.emplace_back(lines[li++]);
  require(li < lines.size() && lines[li] == kSweepHeader, ErrorKind::format,
          path + ": missing sweep header");
  ++li;
  for (; li < lines.size(); ++li) {
    if (lines[li].empty()) continue;
    const auto cells = detail::split(lines[li], ',');
    require(cells.size() == 14, ErrorKind::format,
            path + ": row " + std::to_string(li) + " needs 14 fields");
    SweepRow r;
    r.method = parse_method(std::string(cells[0]));
    r.k = int(detail::parse_int(cells[1], path));
    r.chunk = int(detail::parse_int(cells[2], path));
    r.heads = int(detail::parse_int(cells[3], path));
    r.bucket = -1;
    for (int b = 0; b < kBucketCount; ++b)
      if (cells[4] == kBucketNames[b]) r.bucket = b;
    require(r.bucket >= 0, ErrorKind::format,
            path + ": unknown bucket '" + std::string(cells[4]) + "'");
    r.accuracy = parse_double(cells[5]);
    r.cosine = parse_double(cells[6]);
    r.n = int(detail::parse_int(cells[7], path));
    r.n_labeled = int(detail::parse_int(cells[8], path));
    r.project_ms = parse_double(cells[9]);
    r.graph_ms = parse_double(cells[10]);
    r.fuse_ms = parse_double(cells[11]);
    r.attention_ms = parse_double(cells[12]);
    r.max_ms = parse_double(cells[13]);
    csv.rows.push_back(r);
  }
  return csv;
}

}  // namespace graphalign
