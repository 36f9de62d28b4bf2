#include "mapgo/g2o_io.hpp"

#include <cstdio>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>

namespace mapgo {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
T take(std::istringstream& ss, std::size_t line, const char* field) {
  T v{};
  if (!(ss >> v)) throw ParseError(line, std::string("expected ") + field);
  return v;
}

}  // namespace

PoseGraph read_g2o(std::istream& in) {
  PoseGraph g;
  std::optional<std::pair<int, std::int64_t>> pending_robot;
  std::optional<Pose2> pending_truth;
  std::optional<int> pending_origin;
  std::vector<bool> origin_given;
  std::int64_t order = 0;

  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    std::istringstream ss(text);
    std::string tag;
    if (!(ss >> tag)) continue;
    if (tag == "#") {
      std::string key;
      ss >> key;
      if (key == "ROBOT") {
        auto robot = take<int>(ss, line, "robot id");
        auto step = take<std::int64_t>(ss, line, "timestep");
        pending_robot = {robot, step};
      } else if (key == "TRUTH") {
        auto x = take<double>(ss, line, "x");
        auto y = take<double>(ss, line, "y");
        auto t = take<double>(ss, line, "theta");
        pending_truth = Pose2(x, y, t);
      } else if (key == "ORIGIN") {
        int code = take<int>(ss, line, "origin code");
        if (code < 0 || code > 3) throw ParseError(line, "origin code out of range");
        pending_origin = code;
      }
      continue;
    }
    if (tag[0] == '#') continue;
    if (tag == "VERTEX_SE2") {
      auto id = take<VertexId>(ss, line, "vertex id");
      auto x = take<double>(ss, line, "x");
      auto y = take<double>(ss, line, "y");
      auto t = take<double>(ss, line, "theta");
      Vertex v;
      v.estimate = Pose2(x, y, t);
      v.robot = pending_robot ? pending_robot->first : 0;
      v.timestep = pending_robot ? pending_robot->second : order;
      v.truth = pending_truth;
      if (v.timestep < 0) throw ParseError(line, "negative timestep");
      if (!g.vertices.emplace(id, v).second) throw ParseError(line, "duplicate vertex id");
      pending_robot.reset();
      pending_truth.reset();
      ++order;
    } else if (tag == "EDGE_SE2") {
      EdgeMeasurement e;
      e.from = take<VertexId>(ss, line, "from id");
      e.to = take<VertexId>(ss, line, "to id");
      auto dx = take<double>(ss, line, "dx");
      auto dy = take<double>(ss, line, "dy");
      auto dt = take<double>(ss, line, "dtheta");
      e.rel = Pose2(dx, dy, dt);
      double q[6];
      for (double& v : q) v = take<double>(ss, line, "information entry");
      Eigen::Matrix3d m;
      m << q[0], q[1], q[2], q[1], q[3], q[4], q[2], q[4], q[5];
      try {
        e.info = Information(m);
      } catch (const NonPSDInformation& err) {
        throw NonPSDInformation("line " + std::to_string(line) + ": " + err.what());
      }
      if (e.from == e.to) throw ParseError(line, "self loop");
      e.origin = static_cast<EdgeOrigin>(pending_origin.value_or(0));
      origin_given.push_back(pending_origin.has_value());
      pending_origin.reset();
      g.edges.push_back(e);
    } else if (tag == "FIX") {
      continue;
    } else {
      throw ParseError(line, "unsupported record '" + tag + "'");
    }
  }
  if (g.vertices.empty()) throw ParseError(line, "no VERTEX_SE2 records");

  for (std::size_t k = 0; k < g.edges.size(); ++k) {
    auto& e = g.edges[k];
    auto from = g.vertices.find(e.from), to = g.vertices.find(e.to);
    if (from == g.vertices.end() || to == g.vertices.end())
      throw ParseError(line, "edge " + std::to_string(k) + " references a missing vertex");
    if (origin_given[k]) continue;
    const auto& a = from->second;
    const auto& b = to->second;
    if (a.robot != b.robot)
      e.origin = EdgeOrigin::InterLoop;
    else if (std::abs(a.timestep - b.timestep) == 1)
      e.origin = EdgeOrigin::Odometry;
    else
      e.origin = EdgeOrigin::IntraLoop;
  }
  return g;
}

void write_g2o(const PoseGraph& g, std::ostream& out) {
  for (const auto& [id, v] : g.vertices) {
    out << "# ROBOT " << v.robot << ' ' << v.timestep << '\n';
    if (v.truth)
      out << "# TRUTH " << fmt(v.truth->x) << ' ' << fmt(v.truth->y) << ' ' << fmt(v.truth->theta)
          << '\n';
    out << "VERTEX_SE2 " << id << ' ' << fmt(v.estimate.x) << ' ' << fmt(v.estimate.y) << ' '
        << fmt(v.estimate.theta) << '\n';
  }
  for (const auto& e : g.edges) {
    const auto& m = e.info.matrix();
    out << "# ORIGIN " << static_cast<int>(e.origin) << '\n';
    out << "EDGE_SE2 " << e.from << ' ' << e.to << ' ' << fmt(e.rel.x) << ' ' << fmt(e.rel.y)
        << ' ' << fmt(e.rel.theta) << ' ' << fmt(m(0, 0)) << ' ' << fmt(m(0, 1)) << ' '
        << fmt(m(0, 2)) << ' ' << fmt(m(1, 1)) << ' ' << fmt(m(1, 2)) << ' ' << fmt(m(2, 2))
        << '\n';
  }
}

PoseGraph load_g2o(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return read_g2o(in);
}

void save_g2o(const PoseGraph& g, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  write_g2o(g, out);
}

}  // namespace mapgo
