#include "popup/io.h"

#include "popup/association.h"

#include <bit>
#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace popup {

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v == 0.0 ? 0.0 : v);
  return buf;
}

std::string g17(double v) { return fmt("%.17g", v); }

class LineReader {
 public:
  LineReader(std::istringstream& s, const std::string& source, std::size_t line)
      : s_(s), source_(source), line_(line) {}

  [[noreturn]] void fail(const std::string& msg) const {
    throw Error(ErrorCode::ParseError, source_ + ":" + std::to_string(line_) + ": " + msg);
  }

  double number(const char* what) {
    std::string tok;
    if (!(s_ >> tok)) fail(std::string("missing ") + what);
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0' || !std::isfinite(v)) fail(std::string("bad ") + what + " '" + tok + "'");
    return v;
  }

  int integer(const char* what) {
    std::string tok;
    if (!(s_ >> tok)) fail(std::string("missing ") + what);
    char* end = nullptr;
    const long v = std::strtol(tok.c_str(), &end, 10);
    if (end == tok.c_str() || *end != '\0' || v < 0 || v > 100000000) {
      fail(std::string("bad ") + what + " '" + tok + "'");
    }
    return static_cast<int>(v);
  }

  std::size_t remaining_tokens() const {
    const std::streamoff pos = s_.tellg();
    if (pos < 0) return 0;
    std::istringstream copy(s_.str().substr(static_cast<std::size_t>(pos)));
    std::size_t n = 0;
    for (std::string t; copy >> t;) ++n;
    return n;
  }

  bool done() {
    std::string rest;
    return !(s_ >> rest);
  }

  void finish() {
    if (!done()) fail("trailing tokens");
  }

  Pose3 pose() {
    Eigen::Vector3d t;
    Eigen::Vector4d q;
    for (int i = 0; i < 3; ++i) t(i) = number("translation");
    for (int i = 0; i < 4; ++i) q(i) = number("quaternion");
    if (std::abs(q.norm() - 1.0) > 1e-6) fail("quaternion is not unit length");
    return Pose3(quaternion_to_rotation(q / q.norm()), t);
  }

 private:
  std::istringstream& s_;
  const std::string& source_;
  std::size_t line_;
};

std::string pose_fields(const Pose3& p, std::string (*f)(double)) {
  const Eigen::Vector4d q = rotation_to_quaternion(p.R);
  std::string s;
  for (int i = 0; i < 3; ++i) s += " " + f(p.t(i));
  for (int i = 0; i < 4; ++i) s += " " + f(q(i));
  return s;
}

std::string label_name(PlaneLabel l) { return l == PlaneLabel::Ground ? "ground" : "wall"; }

template <int N>
std::string matrix_fields(const Eigen::Matrix<double, N, N>& m) {
  std::string s;
  for (int r = 0; r < N; ++r) {
    for (int c = 0; c < N; ++c) s += " " + g17(m(r, c));
  }
  return s;
}

template <int N>
Eigen::Matrix<double, N, N> read_matrix(LineReader& r) {
  Eigen::Matrix<double, N, N> m;
  for (int i = 0; i < N; ++i) {
    for (int j = 0; j < N; ++j) m(i, j) = r.number("covariance");
  }
  return m;
}

}  // namespace

Dataset parse_dataset(std::istream& in, const std::string& source) {
  Dataset data;
  std::string line;
  std::size_t lineno = 0;
  std::map<int, std::size_t> index;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream s(line);
    LineReader r(s, source, lineno);
    std::string tag;
    if (!(s >> tag)) continue;

    const auto frame_record = [&](int frame) -> FrameRecord& {
      if (!data.frames.empty() && frame < data.frames.back().frame) {
        r.fail("frame " + std::to_string(frame) + " appears after frame " + std::to_string(data.frames.back().frame));
      }
      if (data.frames.empty() || data.frames.back().frame != frame) {
        data.frames.push_back(FrameRecord{frame, {}, {}, std::nullopt, std::nullopt});
        index[frame] = data.frames.size() - 1;
      }
      return data.frames.back();
    };

    if (tag == "K") {
      const double fx = r.number("fx"), fy = r.number("fy"), cx = r.number("cx"), cy = r.number("cy");
      r.finish();
      if (!(fx > 0) || !(fy > 0)) r.fail("focal lengths must be positive");
      data.k = Intrinsics{fx, fy, cx, cy};
    } else if (tag == "INIT") {
      data.initial_pose = r.pose();
      r.finish();
    } else if (tag == "EDGE") {
      FrameRecord& fr = frame_record(r.integer("frame"));
      const double x1 = r.number("x1"), y1 = r.number("y1"), x2 = r.number("x2"), y2 = r.number("y2");
      r.finish();
      try {
        fr.edges.emplace_back(Eigen::Vector2d(x1, y1), Eigen::Vector2d(x2, y2), static_cast<int>(fr.edges.size()));
      } catch (const Error& e) {
        r.fail(e.what());
      }
    } else if (tag == "XI") {
      FrameRecord& fr = frame_record(r.integer("frame"));
      if (!fr.boundary.empty()) r.fail("duplicate XI record for frame " + std::to_string(fr.frame));
      const std::size_t n = r.remaining_tokens();
      if (n % 2 != 0) r.fail("XI needs x y pairs");
      for (std::size_t i = 0; i < n / 2; ++i) {
        const double x = r.number("x");
        const double y = r.number("y");
        fr.boundary.emplace_back(x, y);
      }
      if (fr.boundary.size() < 2) r.fail("XI needs at least two points");
    } else if (tag == "ODO") {
      FrameRecord& fr = frame_record(r.integer("frame"));
      if (fr.odometry) r.fail("duplicate ODO record for frame " + std::to_string(fr.frame));
      fr.odometry = r.pose();
      r.finish();
    } else if (tag == "VP") {
      FrameRecord& fr = frame_record(r.integer("frame"));
      std::array<Eigen::Vector3d, 3> vp;
      for (auto& v : vp) {
        for (int i = 0; i < 3; ++i) v(i) = r.number("vanishing point");
      }
      r.finish();
      fr.vanishing_points = vp;
    } else if (tag == "LOOP") {
      const int i = r.integer("frame i");
      const int j = r.integer("frame j");
      r.finish();
      if (i >= j) r.fail("LOOP needs i < j");
      data.loops.emplace_back(i, j);
    } else {
      r.fail("unknown record '" + tag + "'");
    }
  }
  for (const auto& [i, j] : data.loops) {
    if (!index.count(i) || !index.count(j)) {
      throw Error(ErrorCode::ParseError, source + ": LOOP " + std::to_string(i) + " " + std::to_string(j) +
                                             " references a frame without records");
    }
  }
  return data;
}

Dataset read_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  return parse_dataset(in, path);
}

void write_dataset(std::ostream& out, const Dataset& data) {
  out << "# popup-slam dataset\n";
  if (data.k) {
    out << "K " << g17(data.k->fx) << ' ' << g17(data.k->fy) << ' ' << g17(data.k->cx) << ' ' << g17(data.k->cy)
        << '\n';
  }
  if (data.initial_pose) out << "INIT" << pose_fields(*data.initial_pose, g17) << '\n';
  for (const auto& fr : data.frames) {
    if (fr.odometry) out << "ODO " << fr.frame << pose_fields(*fr.odometry, g17) << '\n';
    if (fr.vanishing_points) {
      out << "VP " << fr.frame;
      for (const auto& v : *fr.vanishing_points) out << ' ' << g17(v.x()) << ' ' << g17(v.y()) << ' ' << g17(v.z());
      out << '\n';
    }
    for (const auto& e : fr.edges) {
      out << "EDGE " << fr.frame << ' ' << g17(e.a().x()) << ' ' << g17(e.a().y()) << ' ' << g17(e.b().x()) << ' '
          << g17(e.b().y()) << '\n';
    }
    if (fr.boundary.size() >= 2) {
      out << "XI " << fr.frame;
      for (const auto& p : fr.boundary) out << ' ' << g17(p.x()) << ' ' << g17(p.y());
      out << '\n';
    }
  }
  for (const auto& [i, j] : data.loops) out << "LOOP " << i << ' ' << j << '\n';
}

Dataset dataset_from_simulation(const ScenarioTruth& truth, const NoiseModel& noise) {
  Dataset data;
  data.k = truth.k;
  if (!truth.trajectory.empty()) data.initial_pose = truth.trajectory.front();
  for (std::size_t f = 0; f < truth.trajectory.size(); ++f) {
    FrameObservation obs = render_frame(truth, f, noise);
    FrameRecord fr{static_cast<int>(f), std::move(obs.edges), std::move(obs.boundary), std::nullopt, std::nullopt};
    if (f > 0) fr.odometry = obs.odometry;
    data.frames.push_back(std::move(fr));
  }
  return data;
}

void write_trajectory(std::ostream& out, std::span<const Pose3> poses, std::span<const double> timestamps) {
  if (!timestamps.empty() && timestamps.size() != poses.size()) {
    throw Error(ErrorCode::LengthMismatch, "one timestamp per pose required");
  }
  const auto g9 = [](double v) { return fmt("%.9g", v); };
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const double ts = timestamps.empty() ? static_cast<double>(i) : timestamps[i];
    out << fmt("%.9f", ts) << pose_fields(poses[i], +g9) << '\n';
  }
  if (!out) throw Error(ErrorCode::IoError, "failed writing trajectory");
}

std::vector<std::pair<double, Pose3>> parse_trajectory(std::istream& in, const std::string& source) {
  std::vector<std::pair<double, Pose3>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream s(line);
    std::string probe;
    if (!(std::istringstream(line) >> probe)) continue;
    LineReader r(s, source, lineno);
    const double ts = r.number("timestamp");
    const Pose3 p = r.pose();
    r.finish();
    out.emplace_back(ts, p);
  }
  return out;
}

std::size_t write_mesh(std::ostream& out, std::span<const MeshFace> faces, std::vector<std::string>* diagnostics) {
  std::vector<const MeshFace*> good;
  for (const auto& f : faces) {
    std::string reason;
    if (f.polygon.size() < 3 || polygon_area(f.polygon) < 1e-9) {
      reason = "degenerate polygon";
    } else {
      // Planarity against the Newell normal through the centroid.
      Eigen::Vector3d n = Eigen::Vector3d::Zero();
      Eigen::Vector3d c = Eigen::Vector3d::Zero();
      for (std::size_t i = 0; i < f.polygon.size(); ++i) {
        n += f.polygon[i].cross(f.polygon[(i + 1) % f.polygon.size()]);
        c += f.polygon[i];
      }
      n.normalize();
      c /= static_cast<double>(f.polygon.size());
      for (const auto& p : f.polygon) {
        if (std::abs(n.dot(p - c)) > 1e-6) reason = "non-planar polygon";
      }
    }
    if (!reason.empty()) {
      if (diagnostics) diagnostics->push_back("skipping landmark " + std::to_string(f.landmark_id) + ": " + reason);
      continue;
    }
    good.push_back(&f);
  }
  std::size_t nv = 0;
  for (const auto* f : good) nv += f->polygon.size();
  out << "ply\nformat ascii 1.0\ncomment popup-slam plane map\n";
  out << "element vertex " << nv << "\nproperty double x\nproperty double y\nproperty double z\n";
  out << "element face " << good.size()
      << "\nproperty list uchar int vertex_indices\nproperty int landmark_id\nproperty uchar label\n";
  out << "comment label 0 = ground, 1 = wall\nend_header\n";
  for (const auto* f : good) {
    for (const auto& p : f->polygon) out << g17(p.x()) << ' ' << g17(p.y()) << ' ' << g17(p.z()) << '\n';
  }
  std::size_t base = 0;
  for (const auto* f : good) {
    out << f->polygon.size();
    for (std::size_t i = 0; i < f->polygon.size(); ++i) out << ' ' << base + i;
    out << ' ' << f->landmark_id << ' ' << (f->label == PlaneLabel::Ground ? 0 : 1) << '\n';
    base += f->polygon.size();
  }
  if (!out) throw Error(ErrorCode::IoError, "failed writing mesh");
  return good.size();
}

std::vector<MeshFace> mesh_faces(const FactorGraph& graph) {
  std::vector<MeshFace> out;
  for (const auto& [id, lm] : graph.landmarks()) {
    out.push_back({id, lm.label, project_onto(lm.minimal.to_plane(), lm.polygon)});
  }
  return out;
}

std::vector<MapPlane> map_planes(const FactorGraph& graph) {
  std::vector<MapPlane> out;
  for (const auto& [id, lm] : graph.landmarks()) out.push_back({lm.minimal.to_plane(), lm.label, lm.polygon});
  return out;
}

void write_graph(std::ostream& out, const FactorGraph& graph) {
  for (const auto& n : graph.poses()) out << "POSE " << n.id << pose_fields(n.pose, g17) << '\n';
  for (const auto& [id, lm] : graph.landmarks()) {
    out << "PLANE " << id << ' ' << label_name(lm.label);
    for (int i = 0; i < 4; ++i) out << ' ' << g17(lm.minimal.coeffs()(i));
    out << ' ' << lm.last_seen << ' ' << lm.polygon.size();
    for (const auto& p : lm.polygon) out << ' ' << g17(p.x()) << ' ' << g17(p.y()) << ' ' << g17(p.z());
    out << '\n';
  }
  for (const auto& f : graph.factors()) {
    if (const auto* p = std::get_if<PriorPoseFactor>(&f)) {
      out << "PRIOR " << p->pose << pose_fields(p->measured, g17) << matrix_fields<6>(p->covariance) << '\n';
    } else if (const auto* o = std::get_if<OdometryFactor>(&f)) {
      out << "ODOM " << o->from << ' ' << o->to << pose_fields(o->relative, g17) << matrix_fields<6>(o->covariance)
          << '\n';
    } else if (const auto* pf = std::get_if<PlaneFactor>(&f)) {
      out << "PLANEF " << pf->pose << ' ' << pf->landmark << ' ' << pf->edge_index;
      for (int i = 0; i < 4; ++i) out << ' ' << g17(pf->measured.coeffs()(i));
      out << matrix_fields<3>(pf->covariance) << '\n';
    }
  }
}

FactorGraph parse_graph(std::istream& in, const std::string& source) {
  FactorGraph g;
  std::string line;
  std::size_t lineno = 0;
  std::vector<Factor> factors;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream s(line);
    LineReader r(s, source, lineno);
    std::string tag;
    if (!(s >> tag)) continue;
    try {
      if (tag == "POSE") {
        const int id = r.integer("pose id");
        g.add_pose(id, r.pose());
      } else if (tag == "PLANE") {
        PlaneLandmark lm;
        lm.id = r.integer("landmark id");
        std::string label;
        s >> label;
        if (label != "ground" && label != "wall") r.fail("bad label '" + label + "'");
        lm.label = label == "ground" ? PlaneLabel::Ground : PlaneLabel::Wall;
        Eigen::Vector4d q;
        for (int i = 0; i < 4; ++i) q(i) = r.number("plane coefficient");
        lm.minimal = MinimalPlane(q);
        const double last = r.number("last seen");
        lm.last_seen = static_cast<int>(last);
        const int nv = r.integer("vertex count");
        for (int i = 0; i < nv; ++i) {
          const double x = r.number("x"), y = r.number("y"), z = r.number("z");
          lm.polygon.emplace_back(x, y, z);
        }
        g.insert_landmark(std::move(lm));
      } else if (tag == "PRIOR") {
        PriorPoseFactor p;
        p.pose = r.integer("pose id");
        p.measured = r.pose();
        p.covariance = read_matrix<6>(r);
        factors.emplace_back(p);
      } else if (tag == "ODOM") {
        OdometryFactor o;
        o.from = r.integer("from");
        o.to = r.integer("to");
        o.relative = r.pose();
        o.covariance = read_matrix<6>(r);
        factors.emplace_back(o);
      } else if (tag == "PLANEF") {
        PlaneFactor pf;
        pf.pose = r.integer("pose id");
        pf.landmark = r.integer("landmark id");
        const double edge = r.number("edge index");
        pf.edge_index = static_cast<int>(edge);
        Eigen::Vector4d c;
        for (int i = 0; i < 4; ++i) c(i) = r.number("plane coefficient");
        pf.measured = Plane(c.head<3>(), c(3));
        pf.covariance = read_matrix<3>(r);
        factors.emplace_back(pf);
      } else {
        r.fail("unknown record '" + tag + "'");
      }
      r.finish();
    } catch (const Error& e) {
      if (e.code() == ErrorCode::ParseError) throw;
      r.fail(e.what());
    }
  }
  // Factors reference variables, so they are added once all are known.
  const std::map<int, int> last_seen = [&] {
    std::map<int, int> m;
    for (const auto& [id, lm] : g.landmarks()) m[id] = lm.last_seen;
    return m;
  }();
  for (auto& f : factors) {
    try {
      g.add_factor(std::move(f));
    } catch (const Error& e) {
      throw Error(ErrorCode::ParseError, source + ": " + e.what());
    }
  }
  for (auto& [id, lm] : g.landmarks()) lm.last_seen = last_seen.at(id);
  return g;
}

void write_raster(const std::string& path, const Raster& raster) {
  static_assert(std::endian::native == std::endian::little, "raster I/O assumes a little-endian host");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path);
  const std::uint32_t dims[2] = {static_cast<std::uint32_t>(raster.width), static_cast<std::uint32_t>(raster.height)};
  out.write("PUDR", 4);
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  out.write(reinterpret_cast<const char*>(raster.data.data()),
            static_cast<std::streamsize>(raster.data.size() * sizeof(float)));
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + path);
}

Raster read_raster(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  char magic[4];
  std::uint32_t dims[2];
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(dims), sizeof(dims));
  if (!in || std::memcmp(magic, "PUDR", 4) != 0) throw Error(ErrorCode::ParseError, path + ": not a depth raster");
  if (dims[0] > 65536 || dims[1] > 65536) throw Error(ErrorCode::ParseError, path + ": raster too large");
  Raster r(static_cast<int>(dims[0]), static_cast<int>(dims[1]));
  in.read(reinterpret_cast<char*>(r.data.data()), static_cast<std::streamsize>(r.data.size() * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(r.data.size() * sizeof(float))) {
    throw Error(ErrorCode::ParseError, path + ": truncated raster");
  }
  return r;
}

}  // namespace popup
