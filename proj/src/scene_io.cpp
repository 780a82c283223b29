#include "rotonly/scene_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <Eigen/Geometry>

namespace rotonly {

namespace {

constexpr const char* kSceneMagic = "ROTONLY_SCENE";
constexpr const char* kRotationsMagic = "ROTONLY_ROTATIONS";
constexpr int kFormatVersion = 1;

[[noreturn]] void fail(int line, const std::string& what) {
  throw ParseError("line " + std::to_string(line) + ": " + what);
}

// Canonical-sign unit quaternion (wxyz) of a rotation.
Eigen::Vector4d quaternion_of(const Rotation& r) {
  Eigen::Quaterniond q(r.matrix());
  Eigen::Vector4d v(q.w(), q.x(), q.y(), q.z());
  for (int i = 0; i < 4; ++i) {
    if (std::abs(v[i]) > 1e-12) {
      if (v[i] < 0.0) v = -v;
      break;
    }
  }
  return v;
}

Rotation rotation_of(const Eigen::Vector4d& wxyz, int line) {
  const double norm = wxyz.norm();
  if (std::abs(norm - 1.0) > 1e-6) {
    fail(line, "quaternion is not unit to 1e-6");
  }
  if (std::abs(norm - 1.0) > 1e-9) {
    std::cerr << "warning: line " << line
              << ": renormalizing quaternion (|q| - 1 = " << norm - 1.0
              << ")\n";
  }
  Eigen::Quaterniond q(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
  q.normalize();
  return Rotation(q.toRotationMatrix());
}

class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  bool next(std::string& line) {
    while (std::getline(in_, line)) {
      ++line_no_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      return true;
    }
    return false;
  }

  int line_no() const { return line_no_; }

 private:
  std::istream& in_;
  int line_no_ = 0;
};

struct TokenLine {
  std::vector<std::string> tokens;
  int line;
};

TokenLine expect(LineReader& reader, const char* head) {
  std::string line;
  if (!reader.next(line)) {
    fail(reader.line_no() + 1, std::string("expected '") + head +
                                   "' record but reached end of file");
  }
  TokenLine out;
  out.line = reader.line_no();
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) out.tokens.push_back(tok);
  if (out.tokens.empty() || out.tokens[0] != head) {
    fail(out.line, std::string("expected '") + head + "' record");
  }
  return out;
}

double to_double(const std::string& s, int line) {
  try {
    size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) fail(line, "malformed number '" + s + "'");
    return v;
  } catch (const ParseError&) {
    throw;
  } catch (const std::exception&) {
    fail(line, "malformed number '" + s + "'");
  }
}

long long to_int(const std::string& s, int line) {
  try {
    size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    if (pos != s.size()) fail(line, "malformed integer '" + s + "'");
    return v;
  } catch (const ParseError&) {
    throw;
  } catch (const std::exception&) {
    fail(line, "malformed integer '" + s + "'");
  }
}

void rebuild_edges(ViewGraph& graph, int min_shared) {
  std::map<ViewId, std::map<TrackId, Observation>> per_view;
  for (const Track& t : graph.tracks) {
    for (const TrackObservation& to : t.observations) {
      per_view[to.view][t.id] = to.obs;
    }
  }
  for (size_t i = 0; i < graph.cameras.size(); ++i) {
    for (size_t j = i + 1; j < graph.cameras.size(); ++j) {
      const ViewId vi = graph.cameras[i].id;
      const ViewId vj = graph.cameras[j].id;
      MatchedPair pair;
      pair.left_view = vi;
      pair.right_view = vj;
      const auto& obs_i = per_view[vi];
      const auto& obs_j = per_view[vj];
      for (const auto& [track, obs] : obs_i) {
        const auto it = obs_j.find(track);
        if (it != obs_j.end()) {
          pair.points.push_back({obs, it->second, track});
        }
      }
      if (static_cast<int>(pair.points.size()) >= min_shared) {
        graph.edges.push_back(std::move(pair));
      }
    }
  }
}

}  // namespace

std::string format_number(double value) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.12g", value);
  return buf;
}

LoadedScene parse_scene(std::istream& in, int min_shared_points) {
  LineReader reader(in);
  LoadedScene scene;

  std::string line;
  if (!reader.next(line)) fail(1, "empty scene file");
  {
    std::istringstream ss(line);
    std::string magic;
    int version = 0;
    ss >> magic >> version;
    if (magic != kSceneMagic) fail(reader.line_no(), "bad magic header");
    if (version != kFormatVersion) {
      fail(reader.line_no(),
           "unsupported format version " + std::to_string(version));
    }
  }

  const TokenLine focal = expect(reader, "focal_px");
  if (focal.tokens.size() != 2) fail(focal.line, "focal_px takes one value");
  scene.focal_px = to_double(focal.tokens[1], focal.line);
  if (scene.focal_px <= 0.0) fail(focal.line, "focal_px must be positive");

  const TokenLine image = expect(reader, "image_px");
  if (image.tokens.size() != 2) fail(image.line, "image_px takes one value");
  scene.image_px = static_cast<int>(to_int(image.tokens[1], image.line));

  const TokenLine cameras = expect(reader, "cameras");
  if (cameras.tokens.size() != 2) fail(cameras.line, "cameras takes a count");
  const long long n_cameras = to_int(cameras.tokens[1], cameras.line);

  const TokenLine tracks = expect(reader, "tracks");
  if (tracks.tokens.size() != 2) fail(tracks.line, "tracks takes a count");
  const long long n_tracks = to_int(tracks.tokens[1], tracks.line);

  for (long long c = 0; c < n_cameras; ++c) {
    const TokenLine cam = expect(reader, "camera");
    if (cam.tokens.size() != 10) {
      fail(cam.line, "camera record needs id, wxyz quaternion, xyz, gt flag");
    }
    CameraRecord record;
    record.id = static_cast<ViewId>(to_int(cam.tokens[1], cam.line));
    Eigen::Vector4d q;
    for (int i = 0; i < 4; ++i) q[i] = to_double(cam.tokens[2 + i], cam.line);
    Vec3 t;
    for (int i = 0; i < 3; ++i) t[i] = to_double(cam.tokens[6 + i], cam.line);
    const long long gt_flag = to_int(cam.tokens[9], cam.line);
    if (gt_flag != 0) {
      record.gt_pose = CameraPose{rotation_of(q, cam.line), t};
    }
    scene.graph.cameras.push_back(std::move(record));
  }

  for (long long k = 0; k < n_tracks; ++k) {
    const TokenLine tr = expect(reader, "track");
    if (tr.tokens.size() < 4) {
      fail(tr.line, "track record needs id, gt flag, [xyz], count");
    }
    Track track;
    track.id = to_int(tr.tokens[1], tr.line);
    const long long has_gt = to_int(tr.tokens[2], tr.line);
    size_t cursor = 3;
    if (has_gt != 0) {
      if (tr.tokens.size() != 7) {
        fail(tr.line, "track with ground truth needs xyz and a count");
      }
      Vec3 p;
      for (int i = 0; i < 3; ++i) {
        p[i] = to_double(tr.tokens[cursor++], tr.line);
      }
      track.gt_point = p;
    } else if (tr.tokens.size() != 4) {
      fail(tr.line, "track without ground truth takes only a count");
    }
    const long long n_obs = to_int(tr.tokens[cursor], tr.line);
    if (n_obs < 1) fail(tr.line, "track must have at least one observation");
    for (long long o = 0; o < n_obs; ++o) {
      const TokenLine obs = expect(reader, "obs");
      if (obs.tokens.size() != 4) {
        fail(obs.line, "obs record needs view id and pixel coordinates");
      }
      TrackObservation to;
      to.view = static_cast<ViewId>(to_int(obs.tokens[1], obs.line));
      if (scene.graph.camera_index(to.view) < 0) {
        fail(obs.line, "observation references unknown camera");
      }
      to.obs.x = to_double(obs.tokens[2], obs.line) / scene.focal_px;
      to.obs.y = to_double(obs.tokens[3], obs.line) / scene.focal_px;
      track.observations.push_back(std::move(to));
    }
    scene.graph.tracks.push_back(std::move(track));
  }

  if (reader.next(line)) {
    fail(reader.line_no(), "trailing content after the declared records");
  }

  rebuild_edges(scene.graph, min_shared_points);
  return scene;
}

LoadedScene parse_scene_file(const std::string& path, int min_shared_points) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open scene file: " + path);
  return parse_scene(in, min_shared_points);
}

std::string serialize_scene(const ViewGraph& graph, double focal_px,
                            int image_px) {
  std::ostringstream out;
  out << kSceneMagic << ' ' << kFormatVersion << '\n';
  out << "focal_px " << format_number(focal_px) << '\n';
  out << "image_px " << image_px << '\n';
  out << "cameras " << graph.cameras.size() << '\n';
  out << "tracks " << graph.tracks.size() << '\n';
  for (const CameraRecord& cam : graph.cameras) {
    out << "camera " << cam.id;
    if (cam.gt_pose) {
      const Eigen::Vector4d q = quaternion_of(cam.gt_pose->rotation);
      for (int i = 0; i < 4; ++i) out << ' ' << format_number(q[i]);
      for (int i = 0; i < 3; ++i) {
        out << ' ' << format_number(cam.gt_pose->translation[i]);
      }
      out << " 1\n";
    } else {
      out << " 1 0 0 0 0 0 0 0\n";
    }
  }
  for (const Track& track : graph.tracks) {
    out << "track " << track.id << ' ' << (track.gt_point ? 1 : 0);
    if (track.gt_point) {
      for (int i = 0; i < 3; ++i) {
        out << ' ' << format_number((*track.gt_point)[i]);
      }
    }
    out << ' ' << track.observations.size() << '\n';
    for (const TrackObservation& to : track.observations) {
      out << "obs " << to.view << ' ' << format_number(to.obs.x * focal_px)
          << ' ' << format_number(to.obs.y * focal_px) << '\n';
    }
  }
  return out.str();
}

void write_scene_file(const std::string& path, const ViewGraph& graph,
                      double focal_px, int image_px) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write scene file: " + path);
  out << serialize_scene(graph, focal_px, image_px);
}

std::string serialize_rotations(const GlobalRotations& rotations) {
  std::ostringstream out;
  out << kRotationsMagic << ' ' << kFormatVersion << '\n';
  out << "views " << rotations.ids.size() << '\n';
  for (size_t i = 0; i < rotations.ids.size(); ++i) {
    const Eigen::Vector4d q = quaternion_of(rotations.rotations[i]);
    out << "rotation " << rotations.ids[i];
    for (int k = 0; k < 4; ++k) out << ' ' << format_number(q[k]);
    out << '\n';
  }
  return out.str();
}

GlobalRotations parse_rotations(std::istream& in) {
  LineReader reader(in);
  std::string line;
  if (!reader.next(line)) fail(1, "empty rotations file");
  {
    std::istringstream ss(line);
    std::string magic;
    int version = 0;
    ss >> magic >> version;
    if (magic != kRotationsMagic) fail(reader.line_no(), "bad magic header");
    if (version != kFormatVersion) {
      fail(reader.line_no(),
           "unsupported format version " + std::to_string(version));
    }
  }
  const TokenLine views = expect(reader, "views");
  if (views.tokens.size() != 2) fail(views.line, "views takes a count");
  const long long n = to_int(views.tokens[1], views.line);

  GlobalRotations out;
  for (long long i = 0; i < n; ++i) {
    const TokenLine rot = expect(reader, "rotation");
    if (rot.tokens.size() != 6) {
      fail(rot.line, "rotation record needs view id and wxyz quaternion");
    }
    out.ids.push_back(static_cast<ViewId>(to_int(rot.tokens[1], rot.line)));
    Eigen::Vector4d q;
    for (int k = 0; k < 4; ++k) q[k] = to_double(rot.tokens[2 + k], rot.line);
    out.rotations.push_back(rotation_of(q, rot.line));
  }
  if (reader.next(line)) {
    fail(reader.line_no(), "trailing content after the declared records");
  }
  if (!out.ids.empty()) {
    out.gauge = *std::min_element(out.ids.begin(), out.ids.end());
  }
  return out;
}

GlobalRotations parse_rotations_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open rotations file: " + path);
  return parse_rotations(in);
}

void write_rotations_file(const std::string& path,
                          const GlobalRotations& rotations) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write rotations file: " + path);
  out << serialize_rotations(rotations);
}

std::string serialize_result_csv(const std::vector<TrialRow>& rows) {
  std::ostringstream out;
  out << "trial,method,scene_kind,noise_max_px,n_points,error_rad,converged,"
         "iterations,wall_ms\n";
  for (const TrialRow& row : rows) {
    out << row.trial << ',' << row.method << ',' << row.scene_kind << ','
        << format_number(row.noise_max_px) << ',' << row.n_points << ','
        << format_number(row.error_rad) << ',' << (row.converged ? 1 : 0)
        << ',' << row.iterations << ',' << format_number(row.wall_ms) << '\n';
  }
  return out.str();
}

void write_result_csv(const std::string& path,
                      const std::vector<TrialRow>& rows) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write result file: " + path);
  out << serialize_result_csv(rows);
}

}  // namespace rotonly
