#pragma once

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include "mapgo/pose_graph.hpp"

namespace mapgo {

/// Isotropic noise standard deviations (meters for x/y, radians for theta).
struct NoiseProfile {
  double sigma_odom = 0.0;
  double sigma_intraloop = 0.0;
  double sigma_inter = 0.0;  // inter-robot estimates and inter-robot loop closures

  static NoiseProfile V1() { return {0.06, 0.10, 0.14}; }
  static NoiseProfile V2() { return {0.10, 0.14, 0.18}; }
  static NoiseProfile V3() { return {0.14, 0.18, 0.22}; }
  /// "V1", "V2", "V3"; throws InvalidSpec otherwise.
  static NoiseProfile named(std::string_view name);

  double sigma_for(EdgeOrigin o) const;
};

struct GenSpec {
  int n_robots = 3;
  int poses_per_robot = 60;
  double loop_ratio = 0.15;
  NoiseProfile profile = NoiseProfile::V1();
  std::uint64_t seed = 0;

  void validate() const;
};

/// Trajectory-model constants.
inline constexpr double kStepLength = 1.0;
inline constexpr double kTurnProbability = 0.25;
inline constexpr double kProximityRadius = 2.5;
inline constexpr double kRobotSpacing = 2.0;
/// Lower bound on sigma when forming information matrices (sigma = 0 would
/// give infinite information).
inline constexpr double kMinSigma = 1e-3;

/// Manhattan random-walk team trajectories with odometry chains,
/// proximity-sampled loop closures and inter-robot constraints. Vertices carry
/// ground truth; estimates are dead reckoning through the noisy odometry.
/// Vertex id = robot * poses_per_robot + timestep. Deterministic in the seed.
PoseGraph generate(const GenSpec& spec);

struct OutlierInjection {
  PoseGraph graph;
  std::vector<std::size_t> corrupted;  // sorted edge indices
};

/// Replaces exactly round(fraction * |eligible|) loop-closure / inter-robot
/// measurements by outliers: rotation uniform on (-pi, pi], translation drawn
/// from N(0, (0.5 * L_avg)^2 I) with L_avg the mean measured translation
/// length over all edges. Odometry is never touched.
OutlierInjection inject_outliers(const PoseGraph& g, double fraction, std::uint64_t seed);

/// JSON sidecar with ground truth, edge origin labels and corruption labels.
void write_sidecar(const PoseGraph& g, const std::vector<std::size_t>& corrupted,
                   const std::filesystem::path& path);

}  // namespace mapgo
