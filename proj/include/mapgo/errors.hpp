#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mapgo {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : Error {
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_number(line) {}
  /// Malformed text that has no line number (e.g. a command-line value).
  explicit ParseError(const std::string& what) : Error(what), line_number(0) {}
  std::size_t line_number;
};

struct NonPSDInformation : Error {
  using Error::Error;
};
struct MissingGroundTruth : Error {
  using Error::Error;
};
struct InvalidGraph : Error {
  using Error::Error;
};
struct DisconnectedInput : Error {
  using Error::Error;
};
struct UnresolvedSeparator : Error {
  using Error::Error;
};
struct InvalidSpec : Error {
  using Error::Error;
};
struct NoEligibleEdges : Error {
  using Error::Error;
};
struct AlreadyProcessedEdge : Error {
  using Error::Error;
};
struct EmptyActionSet : Error {
  using Error::Error;
};
struct DivergenceDetected : Error {
  using Error::Error;
};
struct SingularNormalEquations : Error {
  using Error::Error;
};

struct CorruptCheckpoint : Error {
  using Error::Error;
};

}  // namespace mapgo
