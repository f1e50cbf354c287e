#pragma once

#include <string>

#include "cohesim/errors.hpp"

namespace cohesim {

/// Which micro evaluator services a cohesive element.
enum class MicroModel { TM, FM };

inline const char* to_string(MicroModel m) { return m == MicroModel::TM ? "TM" : "FM"; }

inline MicroModel micro_model_from_string(const std::string& s) {
  if (s == "TM") return MicroModel::TM;
  if (s == "FM") return MicroModel::FM;
  throw ConfigError("unknown micro model: " + s);
}

}  // namespace cohesim
