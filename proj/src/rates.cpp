#include "hybridsens/rates.hpp"

#include <algorithm>

namespace hybridsens {

RateTable::RateTable(const ReactionNetwork& n, std::vector<double> params,
                     std::optional<std::size_t> live_param)
    : params_(std::move(params)) {
  std::vector<std::size_t> live;
  if (live_param) live.push_back(*live_param);
  const std::size_t K = n.num_reactions();
  for (std::size_t k = 0; k < K; ++k) {
    code_.emplace_back(n.propensity_expression(k), params_, live);
    reads_.push_back(n.propensity_dependencies(k));
    names_.push_back(n.reactions()[k].name);
  }
  affected_.resize(K);
  for (std::size_t k = 0; k < K; ++k) {
    const auto& z = n.zeta(k);
    for (std::size_t j = 0; j < K; ++j)
      if (std::any_of(reads_[j].begin(), reads_[j].end(),
                      [&](std::size_t i) { return z[i] != 0; }))
        affected_[k].push_back(j);
  }
}

bool RateTable::needs_clamp(std::size_t k, std::span<const double> state) const {
  for (std::size_t i : reads_[k])
    if (state[i] < 0.0) return true;
  return false;
}

double RateTable::rate(std::size_t k, std::span<const double> state) const {
  double v;
  if (needs_clamp(k, state)) {
    std::vector<double> c(state.size());
    clamp_state(state, c);
    v = code_[k].eval(c, params_);
  } else {
    v = code_[k].eval(state, params_);
  }
  if (v < 0.0) {
    if (v < -kNegativeStateTolerance)
      throw NumericDomainError("propensity of '" + names_[k] + "' is negative", 0);
    v = 0.0;
  }
  return v;
}

double RateTable::rate_grad(std::size_t k, std::span<const double> state,
                            std::span<const SymbolRef> dirs,
                            std::span<double> grad) const {
  double v;
  if (needs_clamp(k, state)) {
    std::vector<double> c(state.size());
    clamp_state(state, c);
    v = code_[k].eval_grad(c, params_, dirs, grad);
  } else {
    v = code_[k].eval_grad(state, params_, dirs, grad);
  }
  if (v < 0.0) {
    if (v < -kNegativeStateTolerance)
      throw NumericDomainError("propensity of '" + names_[k] + "' is negative", 0);
    v = 0.0;
  }
  return v;
}

}  // namespace hybridsens
