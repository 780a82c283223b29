#include "rotonly/multi_view.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>

namespace rotonly {

namespace {

constexpr double kThetaDegenerateRel = 1e-13;

struct Contribution {
  int edge = 0;
  int point = 0;
  int side = 0;  // 0: block in the edge's left view, 1: right view
};

struct Block {
  int view_idx = 0;
  int track_idx = 0;
  Vec3 obs_hom = Vec3::UnitZ();
  std::vector<Contribution> contribs;
};

struct PointEval {
  double weight = 0.0;  // |theta|, zeroed below the degeneracy threshold
  Vec3 coord_left = Vec3::Zero();
  Vec3 coord_right = Vec3::Zero();
  bool left_valid = false;
  bool right_valid = false;
};

struct EdgeEval {
  bool t_valid = false;
  std::vector<PointEval> points;
};

// Shared machinery for f_grrm, grrm_residual and the global optimizer: block
// bookkeeping plus full and per-view-patch residual evaluation.
class GrrmEvaluator {
 public:
  struct Snapshot {
    std::vector<EdgeEval> edges;
    Eigen::VectorXd residuals;  // 3 per block, zero when invalid
    std::vector<char> valid;
  };

  explicit GrrmEvaluator(const ViewGraph& graph) : graph_(&graph) {
    const int n = static_cast<int>(graph.cameras.size());
    for (int i = 0; i < n; ++i) {
      if (!view_index_.emplace(graph.cameras[i].id, i).second) {
        throw std::invalid_argument("ViewGraph: duplicate camera id");
      }
    }
    for (int t = 0; t < static_cast<int>(graph.tracks.size()); ++t) {
      track_index_.emplace(graph.tracks[t].id, t);
    }

    view_edges_.resize(n);
    std::map<std::pair<int, int>, int> block_of;
    for (int e = 0; e < static_cast<int>(graph.edges.size()); ++e) {
      const MatchedPair& pair = graph.edges[e];
      const int li = require_view(pair.left_view);
      const int ri = require_view(pair.right_view);
      edge_left_.push_back(li);
      edge_right_.push_back(ri);
      view_edges_[li].push_back(e);
      view_edges_[ri].push_back(e);
      for (int p = 0; p < static_cast<int>(pair.points.size()); ++p) {
        const PointMatch& pm = pair.points[p];
        const auto it = track_index_.find(pm.track);
        if (it == track_index_.end()) {
          throw std::invalid_argument(
              "ViewGraph: edge references a track that is not listed");
        }
        add_contribution(block_of, li, it->second, pm.left.hom(),
                         {e, p, 0});
        add_contribution(block_of, ri, it->second, pm.right.hom(),
                         {e, p, 1});
      }
    }
    std::sort(blocks_.begin(), blocks_.end(),
              [](const Block& a, const Block& b) {
                return std::tie(a.track_idx, a.view_idx) <
                       std::tie(b.track_idx, b.view_idx);
              });

    view_blocks_.resize(n);
    for (int b = 0; b < static_cast<int>(blocks_.size()); ++b) {
      for (const Contribution& c : blocks_[b].contribs) {
        touch(view_blocks_[edge_left_[c.edge]], b);
        touch(view_blocks_[edge_right_[c.edge]], b);
      }
    }
    for (auto& list : view_blocks_) {
      std::sort(list.begin(), list.end());
      list.erase(std::unique(list.begin(), list.end()), list.end());
    }
  }

  int num_blocks() const { return static_cast<int>(blocks_.size()); }
  const Block& block(int b) const { return blocks_[b]; }
  const std::vector<int>& blocks_of_view(int v) const {
    return view_blocks_[v];
  }
  int view_count() const { return static_cast<int>(view_edges_.size()); }
  int find_block(ViewId view, TrackId track) const {
    const auto vi = view_index_.find(view);
    const auto ti = track_index_.find(track);
    if (vi == view_index_.end() || ti == track_index_.end()) return -1;
    for (int b = 0; b < num_blocks(); ++b) {
      if (blocks_[b].view_idx == vi->second &&
          blocks_[b].track_idx == ti->second) {
        return b;
      }
    }
    return -1;
  }

  void evaluate_full(const std::vector<Rotation>& rots, Snapshot& snap) const {
    snap.edges.resize(graph_->edges.size());
    for (int e = 0; e < static_cast<int>(graph_->edges.size()); ++e) {
      evaluate_edge(e, rots, snap.edges[e]);
    }
    snap.residuals.setZero(3 * num_blocks());
    snap.valid.assign(num_blocks(), 0);
    for (int b = 0; b < num_blocks(); ++b) {
      Vec3 r;
      if (block_residual(b, snap.edges, &r)) {
        snap.residuals.segment<3>(3 * b) = r;
        snap.valid[b] = 1;
      }
    }
  }

  // Recomputes only the edges incident to view v and the blocks they touch.
  // Blocks that lose validity under the probe keep their base values, so
  // finite-difference columns stay defined over the frozen block set.
  void evaluate_view_patch(const std::vector<Rotation>& rots, int v,
                           const Snapshot& base, Snapshot& out) const {
    out = base;
    for (int e : view_edges_[v]) {
      evaluate_edge(e, rots, out.edges[e]);
    }
    for (int b : view_blocks_[v]) {
      Vec3 r;
      if (block_residual(b, out.edges, &r)) {
        out.residuals.segment<3>(3 * b) = r;
        out.valid[b] = 1;
      } else if (base.valid[b]) {
        out.residuals.segment<3>(3 * b) = base.residuals.segment<3>(3 * b);
      }
    }
  }

 private:
  int require_view(ViewId id) const {
    const auto it = view_index_.find(id);
    if (it == view_index_.end()) {
      throw std::invalid_argument("ViewGraph: edge references unknown view");
    }
    return it->second;
  }

  void add_contribution(std::map<std::pair<int, int>, int>& block_of,
                        int view_idx, int track_idx, const Vec3& obs,
                        const Contribution& c) {
    const auto key = std::make_pair(view_idx, track_idx);
    auto it = block_of.find(key);
    if (it == block_of.end()) {
      it = block_of.emplace(key, static_cast<int>(blocks_.size())).first;
      blocks_.push_back({view_idx, track_idx, obs, {}});
    }
    blocks_[it->second].contribs.push_back(c);
  }

  static void touch(std::vector<int>& list, int b) { list.push_back(b); }

  void evaluate_edge(int e, const std::vector<Rotation>& rots,
                     EdgeEval& out) const {
    const MatchedPair& pair = graph_->edges[e];
    const Rotation r_ij =
        Rotation(rots[edge_right_[e]].matrix() *
                 rots[edge_left_[e]].matrix().transpose());

    const TranslationSolution sol =
        solve_translation(accumulate_ps(pair, r_ij));
    out.t_valid = sol.direction.has_value();
    out.points.assign(pair.points.size(), PointEval{});
    if (!out.t_valid) return;

    const Vec3 t_right = *sol.direction;          // left -> right frame
    const Rotation r_ji = r_ij.transposed();
    const Vec3 t_left = -(r_ji.matrix() * t_right);

    for (int p = 0; p < static_cast<int>(pair.points.size()); ++p) {
      const PointMatch& pm = pair.points[p];
      PointEval& pe = out.points[p];
      const Vec3 rxi = r_ij.matrix() * pm.left.hom();
      const double theta_norm = rxi.cross(pm.right.hom()).norm();
      const double scale = rxi.norm() * pm.right.hom().norm();
      pe.weight = theta_norm > kThetaDegenerateRel * scale ? theta_norm : 0.0;
      if (pe.weight == 0.0) continue;

      const PoseOnlyCoord into_right =
          pose_only_coord(r_ij, t_right, pm.left, pm.right);
      pe.right_valid = into_right.coord_valid;
      pe.coord_right = into_right.coord;
      const PoseOnlyCoord into_left =
          pose_only_coord(r_ji, t_left, pm.right, pm.left);
      pe.left_valid = into_left.coord_valid;
      pe.coord_left = into_left.coord;
    }
  }

  bool block_residual(int b, const std::vector<EdgeEval>& edges,
                      Vec3* out) const {
    const Block& blk = blocks_[b];
    double weight_sum = 0.0;
    Vec3 acc = Vec3::Zero();
    for (const Contribution& c : blk.contribs) {
      const EdgeEval& ee = edges[c.edge];
      if (!ee.t_valid) continue;
      const PointEval& pe = ee.points[c.point];
      if (pe.weight == 0.0) continue;
      const bool valid = c.side == 0 ? pe.left_valid : pe.right_valid;
      if (!valid) continue;
      const Vec3& coord = c.side == 0 ? pe.coord_left : pe.coord_right;
      weight_sum += pe.weight;
      acc += pe.weight * (coord - blk.obs_hom);
    }
    if (weight_sum <= 0.0) return false;
    *out = acc / weight_sum;
    return true;
  }

  const ViewGraph* graph_;
  std::map<ViewId, int> view_index_;
  std::map<TrackId, int> track_index_;
  std::vector<int> edge_left_, edge_right_;
  std::vector<std::vector<int>> view_edges_;
  std::vector<Block> blocks_;
  std::vector<std::vector<int>> view_blocks_;
};

std::vector<Rotation> rotations_in_graph_order(const ViewGraph& graph,
                                               const GlobalRotations& r) {
  std::vector<Rotation> out(graph.cameras.size());
  for (size_t i = 0; i < graph.cameras.size(); ++i) {
    out[i] = r.of(graph.cameras[i].id);
  }
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  return v[mid];
}

}  // namespace

int ViewGraph::camera_index(ViewId id) const {
  for (size_t i = 0; i < cameras.size(); ++i) {
    if (cameras[i].id == id) return static_cast<int>(i);
  }
  return -1;
}

const Rotation& GlobalRotations::of(ViewId id) const {
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] == id) return rotations[i];
  }
  throw std::out_of_range("GlobalRotations: unknown view id");
}

Rotation& GlobalRotations::of(ViewId id) {
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] == id) return rotations[i];
  }
  throw std::out_of_range("GlobalRotations: unknown view id");
}

std::optional<std::pair<double, double>> analytical_depths(
    const Rotation& r_ij, const Vec3& t_ij, const Observation& x_i,
    const Observation& x_j) {
  const Vec3 rxi = r_ij.matrix() * x_i.hom();
  const Vec3 theta = rxi.cross(x_j.hom());
  const double theta_norm = theta.norm();
  if (theta_norm < 1e-14) return std::nullopt;
  const double d_i = x_j.hom().cross(t_ij).norm() / theta_norm;
  const double d_j = rxi.cross(t_ij).norm() / theta_norm;
  return std::make_pair(d_i, d_j);
}

EdgeWeighting edge_weights(const ViewGraph& graph,
                           const GlobalRotations& rotations) {
  EdgeWeighting w;
  for (int e = 0; e < static_cast<int>(graph.edges.size()); ++e) {
    const MatchedPair& pair = graph.edges[e];
    const Rotation r_ij = Rotation(rotations.of(pair.right_view).matrix() *
                                   rotations.of(pair.left_view).matrix()
                                       .transpose());
    for (const PointMatch& pm : pair.points) {
      const double tn = epipolar_normal(r_ij, pm.left, pm.right).norm();
      w.theta_norm[{e, pm.track}] = tn;
      w.omega_sum[{pair.left_view, pm.track}] += tn;
      w.omega_sum[{pair.right_view, pm.track}] += tn;
    }
  }
  for (const auto& [key, tn] : w.theta_norm) {
    const auto& [e, track] = key;
    const MatchedPair& pair = graph.edges[e];
    for (ViewId view : {pair.left_view, pair.right_view}) {
      const double sum = w.omega_sum[{view, track}];
      w.omega[{e, view, track}] = sum > 0.0 ? tn / sum : 0.0;
    }
  }
  return w;
}

std::optional<Vec3> grrm_residual(const ViewGraph& graph,
                                  const GlobalRotations& rotations,
                                  ViewId view, TrackId track) {
  GrrmEvaluator eval(graph);
  const int b = eval.find_block(view, track);
  if (b < 0) {
    throw std::invalid_argument("grrm_residual: track not observed in view");
  }
  GrrmEvaluator::Snapshot snap;
  eval.evaluate_full(rotations_in_graph_order(graph, rotations), snap);
  if (!snap.valid[b]) return std::nullopt;
  return Vec3(snap.residuals.segment<3>(3 * b));
}

double f_grrm(const ViewGraph& graph, const GlobalRotations& rotations) {
  GrrmEvaluator eval(graph);
  GrrmEvaluator::Snapshot snap;
  eval.evaluate_full(rotations_in_graph_order(graph, rotations), snap);
  return snap.residuals.squaredNorm();
}

GlobalRotations init_rotations(const ViewGraph& graph,
                               const std::vector<Rotation>& edge_rotations) {
  const int n = static_cast<int>(graph.cameras.size());
  if (edge_rotations.size() != graph.edges.size()) {
    throw std::invalid_argument(
        "init_rotations: one relative rotation per edge required");
  }
  if (n == 0) throw std::invalid_argument("init_rotations: empty graph");

  // Adjacency with edge indices.
  std::vector<std::vector<std::pair<int, int>>> adj(n);  // (neighbor, edge)
  for (int e = 0; e < static_cast<int>(graph.edges.size()); ++e) {
    const int li = graph.camera_index(graph.edges[e].left_view);
    const int ri = graph.camera_index(graph.edges[e].right_view);
    if (li < 0 || ri < 0) {
      throw std::invalid_argument("init_rotations: edge references unknown view");
    }
    adj[li].push_back({ri, e});
    adj[ri].push_back({li, e});
  }

  int gauge_idx = 0;
  for (int i = 1; i < n; ++i) {
    if (graph.cameras[i].id < graph.cameras[gauge_idx].id) gauge_idx = i;
  }

  // Spanning-tree seed by breadth-first composition from the gauge view.
  std::vector<Rotation> rot(n);
  std::vector<int> state(n, 0);  // 0 unvisited, 1 done
  std::vector<int> queue = {gauge_idx};
  state[gauge_idx] = 1;
  for (size_t head = 0; head < queue.size(); ++head) {
    const int v = queue[head];
    for (const auto& [u, e] : adj[v]) {
      if (state[u]) continue;
      const bool v_is_left =
          graph.camera_index(graph.edges[e].left_view) == v;
      rot[u] = v_is_left ? Rotation(edge_rotations[e].matrix() * rot[v].matrix())
                         : Rotation(edge_rotations[e].matrix().transpose() *
                                    rot[v].matrix());
      state[u] = 1;
      queue.push_back(u);
    }
  }
  if (static_cast<int>(queue.size()) != n) {
    std::ostringstream msg;
    msg << "init_rotations: view graph is disconnected; unreachable views:";
    for (int i = 0; i < n; ++i) {
      if (!state[i]) msg << ' ' << graph.cameras[i].id;
    }
    throw std::invalid_argument(msg.str());
  }

  // Iterative chordal refinement. Plain L2 sweeps first, then IRLS with
  // Cauchy weights rescaled from the median chordal residual each sweep.
  const int l2_sweeps = 20;
  const int irls_sweeps = 10;
  std::vector<double> edge_weight(graph.edges.size(), 1.0);
  for (int sweep = 0; sweep < l2_sweeps + irls_sweeps; ++sweep) {
    if (sweep >= l2_sweeps) {
      std::vector<double> residual(graph.edges.size());
      for (int e = 0; e < static_cast<int>(graph.edges.size()); ++e) {
        const int li = graph.camera_index(graph.edges[e].left_view);
        const int ri = graph.camera_index(graph.edges[e].right_view);
        residual[e] = (rot[ri].matrix() * rot[li].matrix().transpose() -
                       edge_rotations[e].matrix())
                          .norm();
      }
      const double scale = 5.0 * median(residual);
      for (size_t e = 0; e < residual.size(); ++e) {
        edge_weight[e] = scale > 0.0
                             ? 1.0 / (1.0 + (residual[e] / scale) *
                                                (residual[e] / scale))
                             : 1.0;
      }
    }
    for (int v = 0; v < n; ++v) {
      if (v == gauge_idx || adj[v].empty()) continue;
      Mat3 acc = Mat3::Zero();
      for (const auto& [u, e] : adj[v]) {
        const bool v_is_left =
            graph.camera_index(graph.edges[e].left_view) == v;
        const Mat3 estimate =
            v_is_left ? Mat3(edge_rotations[e].matrix().transpose() *
                             rot[u].matrix())
                      : Mat3(edge_rotations[e].matrix() * rot[u].matrix());
        acc += edge_weight[e] * estimate;
      }
      rot[v] = project_to_rotation(acc);
    }
  }

  GlobalRotations out;
  out.gauge = graph.cameras[gauge_idx].id;
  for (int i = 0; i < n; ++i) {
    out.ids.push_back(graph.cameras[i].id);
    out.rotations.push_back(rot[i]);
  }
  return out;
}

GlobalResult optimize_global(const ViewGraph& graph,
                             const GlobalRotations& init,
                             const LMConfig& cfg) {
  if (cfg.damping_init <= 0.0 || cfg.damping_up <= 1.0 ||
      cfg.damping_down <= 0.0 || cfg.damping_down >= 1.0 || cfg.k_max <= 0) {
    throw std::invalid_argument("optimize_global: invalid LM configuration");
  }
  const int n = static_cast<int>(graph.cameras.size());
  const int gauge_idx = graph.camera_index(init.gauge);
  if (gauge_idx < 0) {
    throw std::invalid_argument("optimize_global: gauge view not in graph");
  }

  GrrmEvaluator eval(graph);
  std::vector<Rotation> rots = rotations_in_graph_order(graph, init);

  std::vector<int> param_views;
  for (int i = 0; i < n; ++i) {
    if (i != gauge_idx) param_views.push_back(i);
  }
  const int num_params = 3 * static_cast<int>(param_views.size());

  GlobalResult result;
  result.rotations = init;

  GrrmEvaluator::Snapshot base, probe_plus, probe_minus, cand;
  eval.evaluate_full(rots, base);

  const auto active_cost = [&](const GrrmEvaluator::Snapshot& snap,
                               const std::vector<int>& active) {
    double c = 0.0;
    for (int b : active) c += snap.residuals.segment<3>(3 * b).squaredNorm();
    return c;
  };

  std::vector<int> active;
  for (int b = 0; b < eval.num_blocks(); ++b) {
    if (base.valid[b]) active.push_back(b);
  }
  if (active.empty()) {
    throw std::runtime_error("optimize_global: no valid residual blocks");
  }
  double cost = active_cost(base, active);
  if (!std::isfinite(cost)) {
    throw std::runtime_error("optimize_global: non-finite initial cost");
  }
  result.cost_trace.push_back(cost);

  double damping = cfg.damping_init;
  int accepted = 0;
  for (int iter = 0; iter < cfg.k_max; ++iter) {
    result.iterations = iter + 1;

    // Frozen block set for this iteration.
    active.clear();
    for (int b = 0; b < eval.num_blocks(); ++b) {
      if (base.valid[b]) active.push_back(b);
    }
    const int rows = 3 * static_cast<int>(active.size());
    Eigen::VectorXd res(rows);
    for (size_t a = 0; a < active.size(); ++a) {
      res.segment<3>(3 * a) = base.residuals.segment<3>(3 * active[a]);
    }
    cost = res.squaredNorm();

    Eigen::MatrixXd jac(rows, num_params);
    std::vector<Rotation> probe = rots;
    for (size_t pv = 0; pv < param_views.size(); ++pv) {
      const int v = param_views[pv];
      for (int axis = 0; axis < 3; ++axis) {
        Vec3 delta = Vec3::Zero();
        delta[axis] = cfg.fd_step;
        probe[v] = exp_so3(delta) * rots[v];
        eval.evaluate_view_patch(probe, v, base, probe_plus);
        probe[v] = exp_so3(-delta) * rots[v];
        eval.evaluate_view_patch(probe, v, base, probe_minus);
        probe[v] = rots[v];
        const int col = 3 * static_cast<int>(pv) + axis;
        for (size_t a = 0; a < active.size(); ++a) {
          jac.block<3, 1>(3 * a, col) =
              (probe_plus.residuals.segment<3>(3 * active[a]) -
               probe_minus.residuals.segment<3>(3 * active[a])) /
              (2.0 * cfg.fd_step);
        }
      }
    }

    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd grad = jac.transpose() * res;
    const Eigen::VectorXd diag = jtj.diagonal().cwiseMax(1e-12);

    bool stepped = false;
    while (damping <= 1e12) {
      Eigen::MatrixXd lhs = jtj;
      lhs.diagonal() += damping * diag;
      const Eigen::VectorXd delta = lhs.ldlt().solve(-grad);

      std::vector<Rotation> cand_rots = rots;
      for (size_t pv = 0; pv < param_views.size(); ++pv) {
        const Vec3 d = delta.segment<3>(3 * pv);
        cand_rots[param_views[pv]] =
            exp_so3(d) * rots[param_views[pv]];
      }
      eval.evaluate_full(cand_rots, cand);

      bool set_ok = true;
      for (int b : active) {
        if (!cand.valid[b]) {
          set_ok = false;
          break;
        }
      }
      const double cand_cost =
          set_ok ? active_cost(cand, active)
                 : std::numeric_limits<double>::infinity();

      if (std::isfinite(cand_cost) && cand_cost < cost) {
        const double drop = (cost - cand_cost) / std::max(cost, 1e-300);
        rots = std::move(cand_rots);
        std::swap(base, cand);
        cost = cand_cost;
        result.cost_trace.push_back(cost);
        damping = std::max(damping * cfg.damping_down, 1e-12);
        if (++accepted % 50 == 0) {
          for (Rotation& r : rots) r = r.renormalized();
          eval.evaluate_full(rots, base);
        }
        stepped = true;
        if (drop < cfg.epsilon) result.converged = true;
        break;
      }
      if (std::isfinite(cand_cost) &&
          std::abs(cand_cost - cost) / std::max(cost, 1e-300) < cfg.epsilon) {
        result.converged = true;
        break;
      }
      damping *= cfg.damping_up;
    }
    if (!stepped && !result.converged) break;
    if (result.converged) break;
  }

  for (int i = 0; i < n; ++i) {
    result.rotations.of(graph.cameras[i].id) = rots[i].renormalized();
  }
  return result;
}

std::vector<double> aligned_rotation_errors(const GlobalRotations& est,
                                            const std::vector<ViewId>& ids,
                                            const std::vector<Rotation>& gt) {
  if (ids.size() != gt.size()) {
    throw std::invalid_argument("aligned_rotation_errors: size mismatch");
  }
  Mat3 acc = Mat3::Zero();
  for (size_t i = 0; i < ids.size(); ++i) {
    acc += est.of(ids[i]).matrix().transpose() * gt[i].matrix();
  }
  const Rotation q = project_to_rotation(acc);
  std::vector<double> errors;
  errors.reserve(ids.size());
  for (size_t i = 0; i < ids.size(); ++i) {
    errors.push_back(rotation_error(
        gt[i], Rotation(est.of(ids[i]).matrix() * q.matrix())));
  }
  return errors;
}

double aligned_mean_error(const GlobalRotations& est,
                          const std::vector<ViewId>& ids,
                          const std::vector<Rotation>& gt) {
  const std::vector<double> errors = aligned_rotation_errors(est, ids, gt);
  return std::accumulate(errors.begin(), errors.end(), 0.0) /
         static_cast<double>(errors.size());
}

}  // namespace rotonly
