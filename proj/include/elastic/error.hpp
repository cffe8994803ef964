#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace elastic {

enum class ErrorKind {
  config,      // invalid ClusterConfig / SimulationConfig / legal set
  domain,      // value outside the legal node set
  build,       // program assembly failed
  decode,      // raw solution does not decode to a legal plan
  size,        // oracle enumeration bound exceeded
  infeasible,  // no feasible allocation exists
  parse,       // malformed trace or config text
  validation,  // well-formed input that violates an invariant
  simulation,  // invariant breach during a simulation run
  milestone,   // additional-trained-jobs metric undefined
  io,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return "config";
    case ErrorKind::domain: return "domain";
    case ErrorKind::build: return "build";
    case ErrorKind::decode: return "decode";
    case ErrorKind::size: return "size";
    case ErrorKind::infeasible: return "infeasible";
    case ErrorKind::parse: return "parse";
    case ErrorKind::validation: return "validation";
    case ErrorKind::simulation: return "simulation";
    case ErrorKind::milestone: return "milestone";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace elastic
