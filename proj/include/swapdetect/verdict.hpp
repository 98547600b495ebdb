#pragma once

#include <optional>
#include <string>

#include "swapdetect/types.hpp"

namespace swapdetect {

enum class Method { kClassifier, kAnomaly };

inline std::string to_string(Method method) {
  return method == Method::kClassifier ? "classifier" : "anomaly";
}

inline Method method_from_string(const std::string& name) {
  if (name == "classifier") return Method::kClassifier;
  if (name == "anomaly") return Method::kAnomaly;
  throw ConfigError("unknown method '" + name + "'");
}

// Outcome of judging one (reference, suspicious) pair.
struct Verdict {
  bool face_swapped = false;
  // Classifier: probability the pair is real-real. Anomaly: reconstruction
  // error (higher = more anomalous).
  double score = 0.0;
  Method method = Method::kClassifier;
  std::optional<double> threshold_used;

  std::string label() const { return face_swapped ? "face-swapped" : "real"; }
};

// Classifier decision rule: the pair is called face-swapped when the
// pair-is-real probability falls below the cutoff.
inline bool classifier_flags_swap(double probability_real, double cutoff) {
  return probability_real < cutoff;
}

// Anomaly decision rule: flagged only when the score strictly exceeds the
// threshold; a score equal to the threshold stays "real".
inline bool anomaly_flags_swap(double score, double threshold) {
  return score > threshold;
}

}  // namespace swapdetect
