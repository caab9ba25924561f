#pragma once

#include <stdexcept>
#include <string>

namespace faceaudit {

enum class Gender { Female, Male };

/// Probability of male in [0,1]; scores above 0.5 classify male, at or
/// below 0.5 female.
struct GenderScore {
  double s = 0.5;
  bool male() const { return s > 0.5; }
  Gender decision() const { return male() ? Gender::Male : Gender::Female; }
};

inline const char* to_string(Gender g) {
  return g == Gender::Male ? "male" : "female";
}

inline Gender parse_gender(const std::string& s) {
  if (s == "female") return Gender::Female;
  if (s == "male") return Gender::Male;
  throw std::invalid_argument("unknown gender label: " + s);
}

}  // namespace faceaudit
