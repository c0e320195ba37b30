#include "tsda/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tsda {

std::string to_string(TaskLossKind kind) {
  switch (kind) {
    case TaskLossKind::multiclass_hinge: return "hinge";
    case TaskLossKind::softmax_cross_entropy: return "softmax";
    case TaskLossKind::squared_error: return "squared";
  }
  return "unknown";
}

TaskLossKind parse_task_loss(const std::string& name) {
  if (name == "hinge") return TaskLossKind::multiclass_hinge;
  if (name == "softmax") return TaskLossKind::softmax_cross_entropy;
  if (name == "squared") return TaskLossKind::squared_error;
  throw std::invalid_argument("unknown task loss '" + name + "' (expected hinge|softmax|squared)");
}

std::string to_string(CouplingForm form) {
  return form == CouplingForm::l2 ? "l2" : "exponential";
}

CouplingForm parse_coupling_form(const std::string& name) {
  if (name == "l2") return CouplingForm::l2;
  if (name == "exp" || name == "exponential") return CouplingForm::exponential;
  throw std::invalid_argument("unknown coupling form '" + name + "' (expected l2|exponential)");
}

namespace {

std::size_t class_label(const Label& target, std::size_t classes) {
  if (!std::holds_alternative<std::size_t>(target)) {
    throw std::invalid_argument("classification loss requires an integer class label");
  }
  const std::size_t y = std::get<std::size_t>(target);
  if (y >= classes) {
    throw std::out_of_range("label " + std::to_string(y) + " out of range for " +
                            std::to_string(classes) + " classes");
  }
  return y;
}

}  // namespace

LossAndGrad task_loss(TaskLossKind kind, const Tensor& scores, const Label& target) {
  if (scores.rank() != 1) {
    throw DimensionError("task loss expects a score vector, got " + shape_to_string(scores.shape()));
  }
  const std::size_t n = scores.size();
  LossAndGrad r{0.0, Tensor(scores.shape())};

  switch (kind) {
    case TaskLossKind::multiclass_hinge: {
      const std::size_t y = class_label(target, n);
      for (std::size_t k = 0; k < n; ++k) {
        if (k == y) continue;
        const double margin = 1.0 + scores[k] - scores[y];
        if (margin > 0.0) {
          r.loss += margin;
          r.grad[k] += 1.0;
          r.grad[y] -= 1.0;
        }
      }
      break;
    }
    case TaskLossKind::softmax_cross_entropy: {
      const std::size_t y = class_label(target, n);
      const double m = *std::max_element(scores.data().begin(), scores.data().end());
      double z = 0.0;
      for (std::size_t k = 0; k < n; ++k) z += std::exp(scores[k] - m);
      const double log_z = m + std::log(z);
      r.loss = log_z - scores[y];
      for (std::size_t k = 0; k < n; ++k) r.grad[k] = std::exp(scores[k] - log_z);
      r.grad[y] -= 1.0;
      break;
    }
    case TaskLossKind::squared_error: {
      if (!std::holds_alternative<Tensor>(target)) {
        throw std::invalid_argument("squared_error requires a regression target vector");
      }
      const Tensor& t = std::get<Tensor>(target);
      if (t.size() != n) {
        throw DimensionError("regression target has " + std::to_string(t.size()) +
                             " values, prediction has " + std::to_string(n));
      }
      for (std::size_t k = 0; k < n; ++k) {
        const double d = scores[k] - t[k];
        r.loss += d * d;
        r.grad[k] = 2.0 * d;
      }
      break;
    }
  }
  return r;
}

double coupling_argument(double a, double b, const Tensor& theta_s, const Tensor& theta_t) {
  if (theta_s.shape() != theta_t.shape()) {
    throw DimensionError("coupled parameter shapes differ: " + shape_to_string(theta_s.shape()) +
                         " vs " + shape_to_string(theta_t.shape()));
  }
  double q = 0.0;
  for (std::size_t i = 0; i < theta_s.size(); ++i) {
    const double d = a * theta_s[i] + b - theta_t[i];
    q += d * d;
  }
  return q;
}

CouplingLoss coupling_loss(CouplingForm form, double a, double b, const Tensor& theta_s,
                           const Tensor& theta_t) {
  const double q = coupling_argument(a, b, theta_s, theta_t);
  // dL/dq: 1 for l2, exp(q) for the exponential form.
  const double scale = form == CouplingForm::l2 ? 1.0 : std::exp(q);

  CouplingLoss r;
  r.loss = form == CouplingForm::l2 ? q : std::expm1(q);
  r.grad_source = Tensor(theta_s.shape());
  r.grad_target = Tensor(theta_t.shape());
  for (std::size_t i = 0; i < theta_s.size(); ++i) {
    const double d = a * theta_s[i] + b - theta_t[i];
    const double g = 2.0 * scale * d;
    r.grad_source[i] = a * g;
    r.grad_target[i] = -g;
    r.grad_a += g * theta_s[i];
    r.grad_b += g;
  }
  return r;
}

double rbf_kernel(const Tensor& u, const Tensor& v, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("RBF bandwidth must be positive");
  if (u.shape() != v.shape()) {
    throw DimensionError("kernel arguments differ in shape: " + shape_to_string(u.shape()) +
                         " vs " + shape_to_string(v.shape()));
  }
  return std::exp(-squared_distance(u.data(), v.data()) / sigma);
}

namespace {

// Adds  coeff * dk(u, v)/du  into grad_u, where dk/du = -2 (u - v) k / sigma.
void add_kernel_grad(Tensor& grad_u, const Tensor& u, const Tensor& v, double k, double sigma,
                     double coeff) {
  const double c = -2.0 * k * coeff / sigma;
  for (std::size_t d = 0; d < u.size(); ++d) grad_u[d] += c * (u[d] - v[d]);
}

}  // namespace

MMDResult mmd2(std::span<const Tensor> source, std::span<const Tensor> target,
               const MMDConfig& cfg, bool with_gradients) {
  if (source.empty() || target.empty()) throw std::invalid_argument("mmd2 requires non-empty batches");
  if (!(cfg.sigma > 0.0)) throw std::invalid_argument("RBF bandwidth must be positive");
  const Shape& shape = source.front().shape();
  for (const auto& f : source) {
    if (f.shape() != shape) throw DimensionError("mmd2: source rows differ in dimensionality");
  }
  for (const auto& f : target) {
    if (f.shape() != shape) throw DimensionError("mmd2: target rows differ from source dimensionality");
  }

  const double ns = static_cast<double>(source.size());
  const double nt = static_cast<double>(target.size());
  const double w_ss = 1.0 / (ns * ns);
  const double w_st = 2.0 / (ns * nt);
  const double w_tt = 1.0 / (nt * nt);

  MMDResult r;
  if (with_gradients) {
    r.grad_source.assign(source.size(), Tensor(shape));
    r.grad_target.assign(target.size(), Tensor(shape));
  }

  // Off-diagonal pairs are visited once and counted twice; the diagonal
  // contributes k = 1 with zero gradient.
  double sum_ss = static_cast<double>(source.size());
  for (std::size_t i = 0; i < source.size(); ++i) {
    for (std::size_t j = i + 1; j < source.size(); ++j) {
      const double k = rbf_kernel(source[i], source[j], cfg.sigma);
      sum_ss += 2.0 * k;
      if (with_gradients) {
        add_kernel_grad(r.grad_source[i], source[i], source[j], k, cfg.sigma, 2.0 * w_ss);
        add_kernel_grad(r.grad_source[j], source[j], source[i], k, cfg.sigma, 2.0 * w_ss);
      }
    }
  }
  double sum_tt = static_cast<double>(target.size());
  for (std::size_t i = 0; i < target.size(); ++i) {
    for (std::size_t j = i + 1; j < target.size(); ++j) {
      const double k = rbf_kernel(target[i], target[j], cfg.sigma);
      sum_tt += 2.0 * k;
      if (with_gradients) {
        add_kernel_grad(r.grad_target[i], target[i], target[j], k, cfg.sigma, 2.0 * w_tt);
        add_kernel_grad(r.grad_target[j], target[j], target[i], k, cfg.sigma, 2.0 * w_tt);
      }
    }
  }
  double sum_st = 0.0;
  for (std::size_t i = 0; i < source.size(); ++i) {
    for (std::size_t j = 0; j < target.size(); ++j) {
      const double k = rbf_kernel(source[i], target[j], cfg.sigma);
      sum_st += k;
      if (with_gradients) {
        add_kernel_grad(r.grad_source[i], source[i], target[j], k, cfg.sigma, -w_st);
        add_kernel_grad(r.grad_target[j], target[j], source[i], k, cfg.sigma, -w_st);
      }
    }
  }
  r.value = sum_ss * w_ss - sum_st * w_st + sum_tt * w_tt;
  return r;
}

double total_loss(const LossParts& parts, double lambda_w, double lambda_u) {
  const double lt = parts.target_task.value_or(0.0);
  if (!std::isfinite(parts.source_task) || !std::isfinite(lt) ||
      !std::isfinite(parts.coupling_sum) || !std::isfinite(parts.mmd) ||
      !std::isfinite(lambda_w) || !std::isfinite(lambda_u)) {
    throw std::domain_error("total_loss: non-finite loss term");
  }
  return parts.source_task + lt + lambda_w * parts.coupling_sum + lambda_u * parts.mmd;
}

}  // namespace tsda
