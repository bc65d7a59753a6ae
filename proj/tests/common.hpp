#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "hybridsens/model.hpp"
#include "hybridsens/rng.hpp"
#include "hybridsens/scaling.hpp"

namespace testutil {

inline std::string model_path(const std::string& name) {
  return std::string(HYBRIDSENS_MODEL_DIR) + "/" + name;
}

inline hybridsens::ReactionNetwork net_from(const std::string& json) {
  return hybridsens::parse_network(hybridsens::Json::parse(json));
}

inline hybridsens::ReducedPDMP reduced_from(const std::string& json) {
  return hybridsens::parse_reduced(hybridsens::Json::parse(json));
}

// Replays a fixed list of uniforms, cycling when exhausted.
class Scripted final : public hybridsens::UniformSource {
 public:
  explicit Scripted(std::vector<double> u) : u_(std::move(u)) {}
  double uniform() override { return u_[i_++ % u_.size()]; }
  std::size_t used() const { return i_; }

 private:
  std::vector<double> u_;
  std::size_t i_ = 0;
};

inline double z_of(double a, double sa, double b, double sb) {
  const double s = std::sqrt(sa * sa + sb * sb);
  return s == 0.0 ? std::abs(a - b) : std::abs(a - b) / s;
}

}  // namespace testutil
