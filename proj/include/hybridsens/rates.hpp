#pragma once

#include <optional>
#include <span>
#include <vector>

#include "hybridsens/model.hpp"

namespace hybridsens {

/// Compiled propensities of a network at fixed parameter values. If a live
/// parameter is given it stays symbolic so gradients along it are exact.
class RateTable {
 public:
  RateTable() = default;
  RateTable(const ReactionNetwork& n, std::vector<double> params,
            std::optional<std::size_t> live_param = std::nullopt);

  std::size_t size() const { return code_.size(); }
  const std::vector<double>& params() const { return params_; }

  /// Non-negative propensity; slightly negative inputs are clamped as in
  /// ReactionNetwork::propensity.
  double rate(std::size_t k, std::span<const double> state) const;

  /// Value plus partials along `dirs`. The value is clamped to >= 0 but the
  /// partials are those of the unclamped expression.
  double rate_grad(std::size_t k, std::span<const double> state,
                   std::span<const SymbolRef> dirs, std::span<double> grad) const;

  /// Species read by reaction k.
  const std::vector<std::size_t>& reads(std::size_t k) const { return reads_[k]; }
  /// Reactions whose rate must be refreshed after reaction k fires.
  const std::vector<std::size_t>& affected_by(std::size_t k) const {
    return affected_[k];
  }

 private:
  bool needs_clamp(std::size_t k, std::span<const double> state) const;

  std::vector<CompiledExpr> code_;
  std::vector<double> params_;
  std::vector<std::vector<std::size_t>> reads_;
  std::vector<std::vector<std::size_t>> affected_;
  std::vector<std::string> names_;
};

}  // namespace hybridsens
