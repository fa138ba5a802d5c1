#include "gmmscape/pose_graph.hpp"

#include <json.hpp>

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace gmmscape {

namespace {

Vec6 edge_residual(const PoseGraphEdge& e, const RigidTransform& ti,
                   const RigidTransform& tj) {
  return se3::log(e.relative.inverse().compose(ti.inverse()).compose(tj));
}

double total_residual(const PoseGraph& g) {
  double sum = 0.0;
  for (const auto& e : g.edges) {
    const Vec6 r = edge_residual(e, g.nodes[e.i], g.nodes[e.j]);
    sum += r.dot(e.information * r);
  }
  return sum;
}

}  // namespace

void PoseGraph::validate() const {
  const int n = static_cast<int>(nodes.size());
  if (n == 0) throw std::invalid_argument("pose graph has no nodes");
  std::vector<int> parent(nodes.size());
  std::iota(parent.begin(), parent.end(), 0);
  const auto find = [&](int a) {
    while (parent[a] != a) {
      parent[a] = parent[parent[a]];
      a = parent[a];
    }
    return a;
  };
  for (const auto& e : edges) {
    if (e.i < 0 || e.i >= n || e.j < 0 || e.j >= n) {
      throw std::invalid_argument("edge index out of range");
    }
    if ((e.information - e.information.transpose()).norm() > 1e-9) {
      throw std::invalid_argument("edge information matrix not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Mat6> eig(e.information);
    if (eig.eigenvalues().minCoeff() < -1e-9) {
      throw std::invalid_argument("edge information matrix not PSD");
    }
    parent[std::max(find(e.i), find(e.j))] = std::min(find(e.i), find(e.j));
  }
  for (int a = 0; a < n; ++a) {
    if (find(a) != find(0)) {
      throw std::invalid_argument("pose graph is disconnected");
    }
  }
}

double pose_graph_residual(const PoseGraph& graph) {
  return total_residual(graph);
}

PoseGraphResult pose_graph_optimize(const PoseGraph& graph, int fixed_node,
                                    int max_iters) {
  graph.validate();
  const int n = static_cast<int>(graph.nodes.size());
  if (fixed_node < 0 || fixed_node >= n) {
    throw std::invalid_argument("fixed node index out of range");
  }

  PoseGraphResult result;
  result.graph = graph;
  result.initial_residual = total_residual(result.graph);
  if (result.initial_residual < 1e-18) {
    // Already consistent; leave the poses untouched.
    result.final_residual = result.initial_residual;
    result.converged = true;
    return result;
  }

  // Free-variable indexing skips the fixed node.
  std::vector<int> var_of_node(static_cast<size_t>(n), -1);
  int nv = 0;
  for (int a = 0; a < n; ++a) {
    if (a != fixed_node) var_of_node[a] = nv++;
  }
  const int dim = 6 * nv;

  auto& nodes = result.graph.nodes;
  double chi2 = result.initial_residual;
  double lambda = 1e-6;
  const double h = 1e-6;
  int iter = 0;
  bool converged = false;

  for (; iter < max_iters; ++iter) {
    MatX hess = MatX::Zero(dim, dim);
    VecX grad = VecX::Zero(dim);

    for (const auto& e : graph.edges) {
      const Vec6 r = edge_residual(e, nodes[e.i], nodes[e.j]);
      // Numeric Jacobians wrt right-multiplied local perturbations.
      Mat6 ji, jj;
      for (int d = 0; d < 6; ++d) {
        Vec6 delta = Vec6::Zero();
        delta[d] = h;
        const RigidTransform ti_p = nodes[e.i].compose(se3::exp(delta));
        const RigidTransform ti_m = nodes[e.i].compose(se3::exp(-delta));
        ji.col(d) =
            (edge_residual(e, ti_p, nodes[e.j]) -
             edge_residual(e, ti_m, nodes[e.j])) /
            (2.0 * h);
        const RigidTransform tj_p = nodes[e.j].compose(se3::exp(delta));
        const RigidTransform tj_m = nodes[e.j].compose(se3::exp(-delta));
        jj.col(d) =
            (edge_residual(e, nodes[e.i], tj_p) -
             edge_residual(e, nodes[e.i], tj_m)) /
            (2.0 * h);
      }
      const int vi = var_of_node[e.i];
      const int vj = var_of_node[e.j];
      const Vec6 lr = e.information * r;
      if (vi >= 0) {
        hess.block<6, 6>(6 * vi, 6 * vi) += ji.transpose() * e.information * ji;
        grad.segment<6>(6 * vi) += ji.transpose() * lr;
      }
      if (vj >= 0) {
        hess.block<6, 6>(6 * vj, 6 * vj) += jj.transpose() * e.information * jj;
        grad.segment<6>(6 * vj) += jj.transpose() * lr;
      }
      if (vi >= 0 && vj >= 0) {
        const Mat6 cross = ji.transpose() * e.information * jj;
        hess.block<6, 6>(6 * vi, 6 * vj) += cross;
        hess.block<6, 6>(6 * vj, 6 * vi) += cross.transpose();
      }
    }

    bool accepted = false;
    for (int tries = 0; tries < 40; ++tries) {
      MatX damped = hess;
      damped.diagonal().array() += lambda;
      const VecX delta = damped.ldlt().solve(-grad);
      if (!delta.allFinite()) {
        lambda *= 10.0;
        continue;
      }
      std::vector<RigidTransform> cand = nodes;
      for (int a = 0; a < n; ++a) {
        if (var_of_node[a] < 0) continue;
        cand[a] = cand[a].compose(se3::exp(delta.segment<6>(6 * var_of_node[a])));
        cand[a].orthonormalize();
      }
      PoseGraph trial = result.graph;
      trial.nodes = cand;
      const double chi2_new = total_residual(trial);
      if (chi2_new < chi2) {
        const double drop = chi2 - chi2_new;
        nodes = std::move(cand);
        chi2 = chi2_new;
        lambda = std::max(lambda / 3.0, 1e-12);
        accepted = true;
        if (drop < 1e-12 * std::max(chi2, 1.0) || chi2 < 1e-18) {
          converged = true;
        }
        break;
      }
      lambda *= 10.0;
      if (lambda > 1e14) break;
    }
    if (!accepted) {
      converged = true;  // no descent direction left: local minimum
      break;
    }
    if (converged) break;
  }

  result.final_residual = chi2;
  result.iterations = iter + 1;
  result.converged = converged;
  return result;
}

namespace {

nlohmann::json pose_to_json(const RigidTransform& t) {
  const Eigen::Quaterniond q(t.rotation);
  return {{"quaternion_wxyz", {q.w(), q.x(), q.y(), q.z()}},
          {"translation", {t.translation.x(), t.translation.y(),
                           t.translation.z()}}};
}

RigidTransform pose_from_json(const nlohmann::json& j) {
  const auto& quat = j.at("quaternion_wxyz");
  const auto& tr = j.at("translation");
  if (quat.size() != 4 || tr.size() != 3) {
    throw IoError("pose entry must have 4 quaternion and 3 translation values");
  }
  Eigen::Quaterniond q(quat[0].get<double>(), quat[1].get<double>(),
                       quat[2].get<double>(), quat[3].get<double>());
  if (q.norm() < 1e-12) throw IoError("zero quaternion in pose");
  q.normalize();
  RigidTransform t;
  t.rotation = q.toRotationMatrix();
  t.translation =
      Vec3(tr[0].get<double>(), tr[1].get<double>(), tr[2].get<double>());
  return t;
}

}  // namespace

PoseGraph load_pose_graph(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed JSON in " + path + ": " + e.what());
  }
  PoseGraph g;
  try {
    for (const auto& node : j.at("nodes")) g.nodes.push_back(pose_from_json(node));
    for (const auto& edge : j.at("edges")) {
      PoseGraphEdge e;
      e.i = edge.at("i").get<int>();
      e.j = edge.at("j").get<int>();
      e.relative = pose_from_json(edge);
      if (edge.contains("information")) {
        const auto& info = edge["information"];
        if (info.size() != 36) throw IoError("information must have 36 values");
        for (int r = 0; r < 6; ++r) {
          for (int c = 0; c < 6; ++c) {
            e.information(r, c) = info[6 * r + c].get<double>();
          }
        }
      }
      g.edges.push_back(e);
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad pose graph in " + path + ": " + e.what());
  }
  return g;
}

void save_pose_graph(const PoseGraph& graph, const std::string& path) {
  nlohmann::json j;
  auto& nodes = j["nodes"] = nlohmann::json::array();
  for (const auto& t : graph.nodes) nodes.push_back(pose_to_json(t));
  auto& edges = j["edges"] = nlohmann::json::array();
  for (const auto& e : graph.edges) {
    nlohmann::json je = pose_to_json(e.relative);
    je["i"] = e.i;
    je["j"] = e.j;
    std::vector<double> info(36);
    for (int r = 0; r < 6; ++r) {
      for (int c = 0; c < 6; ++c) info[6 * r + c] = e.information(r, c);
    }
    je["information"] = info;
    edges.push_back(je);
  }
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << j.dump(2) << "\n";
  if (!os) throw IoError("write failed for " + path);
}

}  // namespace gmmscape
