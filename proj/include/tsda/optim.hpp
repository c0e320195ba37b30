#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tsda {

struct AdaDeltaConfig {
  double rho = 0.95;
  double epsilon = 1e-6;
};

/// One named block of trainable values and the gradient to apply to it.
struct ParamBlock {
  std::string name;
  std::span<double> values;
  std::span<const double> grads;
};

class NonFiniteGradient : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// AdaDelta with per-parameter running averages of squared gradients and
/// squared updates:
///
///   E[g^2]  <- rho E[g^2]  + (1 - rho) g^2
///   dx      =  -sqrt((E[dx^2] + eps) / (E[g^2] + eps)) g
///   E[dx^2] <- rho E[dx^2] + (1 - rho) dx^2
///   x       <- x + dx
///
/// Blocks are matched to their accumulators by position, so callers must
/// pass the same block layout on every step.
class AdaDelta {
 public:
  explicit AdaDelta(AdaDeltaConfig cfg = {});

  /// Applies one update to every block. Gradients are validated before any
  /// value is touched; a non-finite entry raises NonFiniteGradient naming
  /// the block.
  void step(std::span<const ParamBlock> blocks);

  const AdaDeltaConfig& config() const { return cfg_; }
  const std::vector<std::vector<double>>& mean_sq_grad() const { return eg2_; }
  const std::vector<std::vector<double>>& mean_sq_update() const { return edx2_; }

 private:
  AdaDeltaConfig cfg_;
  std::vector<std::vector<double>> eg2_;
  std::vector<std::vector<double>> edx2_;
};

}  // namespace tsda
