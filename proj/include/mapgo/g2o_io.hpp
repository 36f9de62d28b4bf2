#pragma once

#include <filesystem>
#include <iosfwd>

#include "mapgo/pose_graph.hpp"

namespace mapgo {

// g2o text format with VERTEX_SE2 / EDGE_SE2 records. Fields that plain g2o
// cannot carry are stored in comment tags that precede the record they
// annotate, so other g2o readers skip them:
//
//   # ROBOT <robot> <timestep>     before VERTEX_SE2
//   # TRUTH <x> <y> <theta>        before VERTEX_SE2
//   # ORIGIN <0..3>                before EDGE_SE2
//
// Edges without an ORIGIN tag are labelled Odometry when they join
// consecutive timesteps of one robot, IntraLoop otherwise (InterLoop when the
// robots differ). Vertices without a ROBOT tag get robot 0 and their file
// order as timestep.

PoseGraph read_g2o(std::istream& in);
void write_g2o(const PoseGraph& g, std::ostream& out);

PoseGraph load_g2o(const std::filesystem::path& path);
void save_g2o(const PoseGraph& g, const std::filesystem::path& path);

}  // namespace mapgo
