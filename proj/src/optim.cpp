#include "tsda/optim.hpp"

#include <cmath>

namespace tsda {

AdaDelta::AdaDelta(AdaDeltaConfig cfg) : cfg_(cfg) {
  if (!(cfg_.rho > 0.0 && cfg_.rho < 1.0)) throw std::invalid_argument("AdaDelta rho must lie in (0, 1)");
  if (!(cfg_.epsilon > 0.0)) throw std::invalid_argument("AdaDelta epsilon must be positive");
}

void AdaDelta::step(std::span<const ParamBlock> blocks) {
  if (eg2_.empty()) {
    for (const auto& b : blocks) {
      eg2_.emplace_back(b.values.size(), 0.0);
      edx2_.emplace_back(b.values.size(), 0.0);
    }
  }
  if (blocks.size() != eg2_.size()) {
    throw std::invalid_argument("AdaDelta: expected " + std::to_string(eg2_.size()) +
                                " parameter blocks, got " + std::to_string(blocks.size()));
  }
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    const auto& b = blocks[k];
    if (b.values.size() != eg2_[k].size() || b.grads.size() != b.values.size()) {
      throw std::invalid_argument("AdaDelta: block '" + b.name + "' changed size");
    }
    for (std::size_t i = 0; i < b.grads.size(); ++i) {
      if (!std::isfinite(b.grads[i])) {
        throw NonFiniteGradient("non-finite gradient in parameter block '" + b.name +
                                "' at index " + std::to_string(i));
      }
    }
  }

  const double rho = cfg_.rho;
  const double eps = cfg_.epsilon;
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    const auto& b = blocks[k];
    auto& eg2 = eg2_[k];
    auto& edx2 = edx2_[k];
    for (std::size_t i = 0; i < b.values.size(); ++i) {
      const double g = b.grads[i];
      eg2[i] = rho * eg2[i] + (1.0 - rho) * g * g;
      const double dx = -std::sqrt((edx2[i] + eps) / (eg2[i] + eps)) * g;
      edx2[i] = rho * edx2[i] + (1.0 - rho) * dx * dx;
      b.values[i] += dx;
    }
  }
}

}  // namespace tsda
