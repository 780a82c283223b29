// Text file formats: line-oriented scene files (cameras, tracks, pixel
// observations), rotation files (quaternions per view), and the benchmark
// result CSV. All numbers are written with 12 significant digits, enough to
// re-parse below every test tolerance, and serialization is canonical so
// parse -> serialize -> parse is idempotent.
#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "rotonly/multi_view.hpp"
#include "rotonly/simulate.hpp"

namespace rotonly {

// Data errors carry the offending line number in the message.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LoadedScene {
  ViewGraph graph;  // observations in normalized coordinates
  double focal_px = 480.0;
  int image_px = 960;
};

// Pixel coordinates in the file are relative to the principal point (image
// center); parsing divides by the focal length. Edges are not stored: they
// are rebuilt as every view pair sharing at least min_shared_points tracks.
LoadedScene parse_scene(std::istream& in, int min_shared_points = 8);
LoadedScene parse_scene_file(const std::string& path,
                             int min_shared_points = 8);

std::string serialize_scene(const ViewGraph& graph, double focal_px,
                            int image_px);
void write_scene_file(const std::string& path, const ViewGraph& graph,
                      double focal_px, int image_px);

// Rotation files: one unit quaternion (wxyz) per view id.
std::string serialize_rotations(const GlobalRotations& rotations);
GlobalRotations parse_rotations(std::istream& in);
GlobalRotations parse_rotations_file(const std::string& path);
void write_rotations_file(const std::string& path,
                          const GlobalRotations& rotations);

// Benchmark result table. Fixed header, rows already ordered by the caller.
std::string serialize_result_csv(const std::vector<TrialRow>& rows);
void write_result_csv(const std::string& path,
                      const std::vector<TrialRow>& rows);

// 12-significant-digit decimal used across all text outputs.
std::string format_number(double value);

}  // namespace rotonly
