#include "mapgo/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "json.hpp"

namespace mapgo {

NoiseProfile NoiseProfile::named(std::string_view name) {
  if (name == "V1") return V1();
  if (name == "V2") return V2();
  if (name == "V3") return V3();
  throw InvalidSpec("unknown noise profile '" + std::string(name) + "'");
}

double NoiseProfile::sigma_for(EdgeOrigin o) const {
  switch (o) {
    case EdgeOrigin::Odometry: return sigma_odom;
    case EdgeOrigin::IntraLoop: return sigma_intraloop;
    default: return sigma_inter;
  }
}

void GenSpec::validate() const {
  if (n_robots < 1) throw InvalidSpec("n_robots must be >= 1");
  if (poses_per_robot < 2) throw InvalidSpec("poses_per_robot must be >= 2");
  if (!(loop_ratio >= 0.0 && loop_ratio <= 1.0)) throw InvalidSpec("loop_ratio must be in [0, 1]");
  if (!(profile.sigma_odom >= 0.0 && profile.sigma_intraloop >= 0.0 && profile.sigma_inter >= 0.0))
    throw InvalidSpec("noise sigmas must be >= 0");
}

namespace {

using Rng = std::mt19937_64;

std::vector<Pose2> manhattan_walk(Rng& rng, int robot, int poses) {
  std::uniform_int_distribution<int> heading_dist(0, 3);
  std::bernoulli_distribution turn(kTurnProbability);
  std::bernoulli_distribution left(0.5);
  int heading = heading_dist(rng);
  double x = kRobotSpacing * robot, y = 0.0;
  std::vector<Pose2> out;
  out.reserve(poses);
  for (int t = 0; t < poses; ++t) {
    out.emplace_back(x, y, heading * std::numbers::pi / 2.0);
    if (turn(rng)) heading = (heading + (left(rng) ? 1 : 3)) % 4;
    x += kStepLength * std::round(std::cos(heading * std::numbers::pi / 2.0));
    y += kStepLength * std::round(std::sin(heading * std::numbers::pi / 2.0));
  }
  return out;
}

Pose2 noisy(const Pose2& p, double sigma, Rng& rng) {
  if (sigma == 0.0) return p;
  std::normal_distribution<double> n(0.0, sigma);
  const double dx = n(rng), dy = n(rng), dt = n(rng);
  return {p.x + dx, p.y + dy, p.theta + dt};
}

Information info_for(double sigma) {
  const double s = std::max(sigma, kMinSigma);
  const double w = 1.0 / (s * s);
  return Information::diagonal(w, w, w);
}

// Picks round(ratio * n) distinct indices from [0, n), returned sorted.
std::vector<std::size_t> sample_subset(std::size_t n, double ratio, Rng& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n))));
  std::sort(idx.begin(), idx.end());
  return idx;
}

double distance(const Pose2& a, const Pose2& b) { return std::hypot(a.x - b.x, a.y - b.y); }

}  // namespace

PoseGraph generate(const GenSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const int n = spec.n_robots, m = spec.poses_per_robot;
  auto id_of = [m](int r, int t) { return static_cast<VertexId>(r) * m + t; };

  std::vector<std::vector<Pose2>> truth(n);
  for (int r = 0; r < n; ++r) truth[r] = manhattan_walk(rng, r, m);

  struct Pair {
    int ra, ta, rb, tb;
  };
  // Adjacent robots start kRobotSpacing apart, so every adjacent pair has at
  // least the (r, 0)-(r + 1, 0) candidate; re-walk otherwise.
  std::vector<Pair> inter_eligible;
  for (int attempt = 0;; ++attempt) {
    inter_eligible.clear();
    bool all_adjacent = true;
    for (int r = 0; r + 1 < n; ++r) {
      bool found = false;
      for (int s = r + 1; s < n; ++s)
        for (int a = 0; a < m; ++a)
          for (int b = 0; b < m; ++b)
            if (distance(truth[r][a], truth[s][b]) <= kProximityRadius) {
              if (s == r + 1) found = true;
              inter_eligible.push_back({r, a, s, b});
            }
      all_adjacent = all_adjacent && found;
    }
    if (all_adjacent) break;
    if (attempt > 100) throw InvalidSpec("could not place connected trajectories");
    for (int r = 1; r < n; ++r) truth[r] = manhattan_walk(rng, r, m);
  }

  PoseGraph g;
  for (int r = 0; r < n; ++r)
    for (int t = 0; t < m; ++t) {
      Vertex v;
      v.robot = r;
      v.timestep = t;
      v.truth = truth[r][t];
      g.vertices.emplace(id_of(r, t), v);
    }

  auto add_edge = [&](int ra, int ta, int rb, int tb, EdgeOrigin origin) {
    const double sigma = spec.profile.sigma_for(origin);
    const Pose2 rel = noisy(between(truth[ra][ta], truth[rb][tb]), sigma, rng);
    g.edges.push_back(make_edge(id_of(ra, ta), id_of(rb, tb), rel, info_for(sigma), origin));
  };

  for (int r = 0; r < n; ++r)
    for (int t = 0; t + 1 < m; ++t) add_edge(r, t, r, t + 1, EdgeOrigin::Odometry);

  for (int r = 0; r < n; ++r) {
    std::vector<std::pair<int, int>> eligible;
    for (int a = 0; a < m; ++a)
      for (int b = a + 2; b < m; ++b)
        if (distance(truth[r][a], truth[r][b]) <= kProximityRadius) eligible.emplace_back(a, b);
    for (std::size_t k : sample_subset(eligible.size(), spec.loop_ratio, rng))
      add_edge(r, eligible[k].first, r, eligible[k].second, EdgeOrigin::IntraLoop);
  }

  std::vector<std::size_t> chosen = sample_subset(inter_eligible.size(), spec.loop_ratio, rng);
  for (int r = 0; r + 1 < n; ++r) {
    const bool covered = std::any_of(chosen.begin(), chosen.end(), [&](std::size_t k) {
      return inter_eligible[k].ra == r && inter_eligible[k].rb == r + 1;
    });
    if (covered) continue;
    std::vector<std::size_t> candidates;
    for (std::size_t k = 0; k < inter_eligible.size(); ++k)
      if (inter_eligible[k].ra == r && inter_eligible[k].rb == r + 1) candidates.push_back(k);
    std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
    chosen.push_back(candidates[pick(rng)]);
  }
  std::sort(chosen.begin(), chosen.end());
  for (std::size_t k : chosen) {
    const auto& p = inter_eligible[k];
    add_edge(p.ra, p.ta, p.rb, p.tb,
             std::abs(p.ta - p.tb) <= 1 ? EdgeOrigin::InterEstimate : EdgeOrigin::InterLoop);
  }

  // Dead reckoning from each robot's true start through its noisy odometry.
  for (int r = 0; r < n; ++r) g.vertices.at(id_of(r, 0)).estimate = truth[r][0];
  for (const auto& e : g.edges) {
    if (e.origin != EdgeOrigin::Odometry) continue;
    g.vertices.at(e.to).estimate = compose(g.vertices.at(e.from).estimate, e.rel);
  }
  return g;
}

OutlierInjection inject_outliers(const PoseGraph& g, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw InvalidSpec("fraction must be in [0, 1]");
  std::vector<std::size_t> eligible;
  double total_len = 0.0;
  for (std::size_t k = 0; k < g.edges.size(); ++k) {
    total_len += std::hypot(g.edges[k].rel.x, g.edges[k].rel.y);
    if (is_loop_or_inter(g.edges[k].origin)) eligible.push_back(k);
  }
  if (eligible.empty()) throw NoEligibleEdges("no loop-closure or inter-robot edges to corrupt");
  const double l_avg = total_len / static_cast<double>(g.edges.size());

  Rng rng(seed);
  OutlierInjection out{g, {}};
  for (std::size_t k : sample_subset(eligible.size(), fraction, rng)) out.corrupted.push_back(eligible[k]);
  std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
  std::normal_distribution<double> trans(0.0, 0.5 * l_avg);
  for (std::size_t k : out.corrupted) {
    const double th = angle(rng);
    const double x = trans(rng), y = trans(rng);
    out.graph.edges[k].rel = Pose2(x, y, th);
  }
  return out;
}

void write_sidecar(const PoseGraph& g, const std::vector<std::size_t>& corrupted,
                   const std::filesystem::path& path) {
  nlohmann::json j;
  auto& truth = j["ground_truth"] = nlohmann::json::array();
  for (const auto& [id, v] : g.vertices) {
    nlohmann::json row = {{"id", id}, {"robot", v.robot}, {"timestep", v.timestep}};
    if (v.truth) row["pose"] = {v.truth->x, v.truth->y, v.truth->theta};
    truth.push_back(row);
  }
  auto& labels = j["edge_origins"] = nlohmann::json::array();
  for (const auto& e : g.edges) labels.push_back(std::string(origin_name(e.origin)));
  j["corrupted_edges"] = corrupted;
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace mapgo
