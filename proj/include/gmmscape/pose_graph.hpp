#pragma once

#include <string>
#include <vector>

#include "gmmscape/se3.hpp"

namespace gmmscape {

struct PoseGraphEdge {
  int i = 0;
  int j = 0;
  RigidTransform relative;  // measured T_i^{-1} T_j
  Mat6 information = Mat6::Identity();
};

struct PoseGraph {
  std::vector<RigidTransform> nodes;  // absolute poses
  std::vector<PoseGraphEdge> edges;

  /// Index bounds, information symmetry/PSD, connectivity.
  void validate() const;
};

struct PoseGraphResult {
  PoseGraph graph;
  double initial_residual = 0.0;  // sum of r^T Lambda r
  double final_residual = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Minimizes sum_edges || log(T_ij^{-1} T_i^{-1} T_j) ||^2_Lambda with the
/// given node held fixed. Damped Gauss-Newton with numeric edge Jacobians;
/// a non-converged result is returned with the flag cleared.
PoseGraphResult pose_graph_optimize(const PoseGraph& graph, int fixed_node,
                                    int max_iters = 100);

/// Total weighted residual of the graph as-is.
double pose_graph_residual(const PoseGraph& graph);

// JSON file format: {"nodes":[{"quaternion_wxyz":[w,x,y,z],
// "translation":[x,y,z]}...], "edges":[{"i":..,"j":..,"quaternion_wxyz":[..],
// "translation":[..], "information":[36 row-major, optional]}...]}
PoseGraph load_pose_graph(const std::string& path);
void save_pose_graph(const PoseGraph& graph, const std::string& path);

}  // namespace gmmscape
