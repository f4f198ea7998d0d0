#include "evsim/core.hpp"

#include <cmath>

namespace evsim {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::UnknownNode: return "UnknownNode";
    case ErrorKind::NoPath: return "NoPath";
    case ErrorKind::EmptyPath: return "EmptyPath";
    case ErrorKind::InvalidGraph: return "InvalidGraph";
    case ErrorKind::ZeroLengthPath: return "ZeroLengthPath";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::TooFewPoints: return "TooFewPoints";
    case ErrorKind::TooFewValues: return "TooFewValues";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NoLegalAction: return "NoLegalAction";
    case ErrorKind::BufferTooSmall: return "BufferTooSmall";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::ArchitectureMismatch: return "ArchitectureMismatch";
    case ErrorKind::NoActiveTrip: return "NoActiveTrip";
    case ErrorKind::IllegalAction: return "IllegalAction";
    case ErrorKind::InternalInconsistency: return "InternalInconsistency";
    case ErrorKind::NonFiniteReward: return "NonFiniteReward";
    case ErrorKind::PortOverflow: return "PortOverflow";
    case ErrorKind::ZeroVariance: return "ZeroVariance";
    case ErrorKind::KeyMismatch: return "KeyMismatch";
    case ErrorKind::InsufficientOverlap: return "InsufficientOverlap";
    case ErrorKind::RetryLimit: return "RetryLimit";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

// Marsaglia polar method; the spare deviate is kept so that the stream of
// draws depends only on the seed.
double Rng::normal(double mean, double sd) {
  if (has_spare_) {
    has_spare_ = false;
    return mean + sd * spare_;
  }
  double u, v, s;
  do {
    u = uniform(-1.0, 1.0);
    v = uniform(-1.0, 1.0);
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * f;
  has_spare_ = true;
  return mean + sd * u * f;
}

}  // namespace evsim
