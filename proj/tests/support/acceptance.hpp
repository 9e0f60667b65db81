#pragma once

#include <functional>
#include <string>
#include <vector>

namespace acceptance {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using CriterionFn = std::function<Outcome()>;

struct Criterion {
  std::string name;
  std::string description;
  CriterionFn fn;
};

}  // namespace acceptance
