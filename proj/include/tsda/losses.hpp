#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "tsda/tensor.hpp"

namespace tsda {

enum class TaskLossKind { multiclass_hinge, softmax_cross_entropy, squared_error };

std::string to_string(TaskLossKind kind);
TaskLossKind parse_task_loss(const std::string& name);

/// A sample label: unlabeled, a class index, or a regression vector.
using Label = std::variant<std::monostate, std::size_t, Tensor>;

inline bool is_labeled(const Label& y) { return !std::holds_alternative<std::monostate>(y); }

struct LossAndGrad {
  double loss = 0.0;
  Tensor grad;
};

/// Per-sample task loss and its gradient w.r.t. the scores.
///
/// multiclass_hinge is the Crammer-Singer sum over k != y of
/// max(0, 1 + s_k - s_y); softmax_cross_entropy is -log softmax(s)_y;
/// squared_error is sum_k (s_k - t_k)^2.
LossAndGrad task_loss(TaskLossKind kind, const Tensor& scores, const Label& target);

enum class CouplingForm { l2, exponential };

std::string to_string(CouplingForm form);
CouplingForm parse_coupling_form(const std::string& name);

/// Scalars of the affine map relating a coupled layer's source and target
/// parameters.
struct CouplingParams {
  double a = 1.0;
  double b = 0.0;
  friend bool operator==(const CouplingParams&, const CouplingParams&) = default;
};

struct CouplingLoss {
  double loss = 0.0;
  Tensor grad_source;
  Tensor grad_target;
  double grad_a = 0.0;
  double grad_b = 0.0;
};

/// Squared distance q = ||a * theta_s + b - theta_t||^2, the argument both
/// coupling forms share.
double coupling_argument(double a, double b, const Tensor& theta_s, const Tensor& theta_t);

/// l2: q.  exponential: exp(q) - 1.  Gradients w.r.t. both parameter blobs and
/// both scalars.
CouplingLoss coupling_loss(CouplingForm form, double a, double b, const Tensor& theta_s,
                           const Tensor& theta_t);

struct MMDConfig {
  double sigma = 1.0;
};

/// k(u, v) = exp(-||u - v||^2 / sigma).
double rbf_kernel(const Tensor& u, const Tensor& v, double sigma);

struct MMDResult {
  double value = 0.0;
  std::vector<Tensor> grad_source;  // d value / d f^s_i, one per row
  std::vector<Tensor> grad_target;  // d value / d f^t_j, one per row
};

/// Biased (V-statistic) squared MMD with an RBF kernel:
///   sum k(s,s')/Ns^2 - 2 sum k(s,t)/(Ns Nt) + sum k(t,t')/Nt^2
/// including the i == i' terms. Gradients are returned only when requested.
MMDResult mmd2(std::span<const Tensor> source, std::span<const Tensor> target,
               const MMDConfig& cfg, bool with_gradients = true);

/// The four terms of the two-stream objective before weighting.
struct LossParts {
  double source_task = 0.0;
  std::optional<double> target_task;  // absent with no labeled target rows
  double coupling_sum = 0.0;          // sum of r_w over coupled layers
  double mmd = 0.0;                   // r_u
};

/// L = L_s + L_t + lambda_w * sum r_w + lambda_u * r_u. Throws
/// std::domain_error on non-finite parts.
double total_loss(const LossParts& parts, double lambda_w, double lambda_u);

}  // namespace tsda
