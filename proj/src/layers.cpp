#include "tsda/layers.hpp"

#include <cmath>

namespace tsda {

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::dense: return "dense";
    case LayerKind::relu: return "relu";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::maxpool2d: return "maxpool2d";
    case LayerKind::flatten: return "flatten";
  }
  return "unknown";
}

LayerSpec LayerSpec::dense(std::size_t in, std::size_t out) {
  if (in == 0 || out == 0) throw DimensionError("dense layer widths must be positive");
  return {LayerKind::dense, in, out, 0, 0};
}

LayerSpec LayerSpec::relu() { return {LayerKind::relu, 0, 0, 0, 0}; }

LayerSpec LayerSpec::conv2d(std::size_t in_channels, std::size_t out_channels,
                            std::size_t kernel_h, std::size_t kernel_w) {
  if (in_channels == 0 || out_channels == 0 || kernel_h == 0 || kernel_w == 0) {
    throw DimensionError("conv2d channels and kernel sizes must be positive");
  }
  return {LayerKind::conv2d, in_channels, out_channels, kernel_h, kernel_w};
}

LayerSpec LayerSpec::maxpool2d() { return {LayerKind::maxpool2d, 0, 0, 0, 0}; }

LayerSpec LayerSpec::flatten() { return {LayerKind::flatten, 0, 0, 0, 0}; }

Shape LayerSpec::weight_shape() const {
  switch (kind) {
    case LayerKind::dense: return {out, in};
    case LayerKind::conv2d: return {out, in, kernel_h, kernel_w};
    default: return {};
  }
}

Shape LayerSpec::bias_shape() const {
  if (!has_params()) return {};
  return {out};
}

Shape LayerSpec::output_shape(const Shape& input) const {
  const std::string where = to_string(kind) + " layer: ";
  switch (kind) {
    case LayerKind::dense:
      if (input.size() != 1 || input[0] != in) {
        throw DimensionError(where + "expected input [" + std::to_string(in) + "], got " +
                             shape_to_string(input));
      }
      return {out};
    case LayerKind::relu:
      if (input.empty()) throw DimensionError(where + "empty input shape");
      return input;
    case LayerKind::conv2d:
      if (input.size() != 3 || input[0] != in) {
        throw DimensionError(where + "expected input [" + std::to_string(in) + "xHxW], got " +
                             shape_to_string(input));
      }
      if (input[1] < kernel_h || input[2] < kernel_w) {
        throw DimensionError(where + "kernel " + std::to_string(kernel_h) + "x" +
                             std::to_string(kernel_w) + " larger than input " +
                             shape_to_string(input));
      }
      return {out, input[1] - kernel_h + 1, input[2] - kernel_w + 1};
    case LayerKind::maxpool2d:
      if (input.size() != 3 || input[1] < 2 || input[2] < 2) {
        throw DimensionError(where + "expected input [CxHxW] with H,W >= 2, got " +
                             shape_to_string(input));
      }
      return {input[0], input[1] / 2, input[2] / 2};
    case LayerKind::flatten:
      if (input.empty()) throw DimensionError(where + "empty input shape");
      return {shape_size(input)};
  }
  throw DimensionError("unknown layer kind");
}

LayerParams zero_params(const LayerSpec& spec) {
  if (!spec.has_params()) return {};
  return {Tensor(spec.weight_shape()), Tensor(spec.bias_shape())};
}

LayerParams init_params(const LayerSpec& spec, std::mt19937_64& rng) {
  LayerParams p = zero_params(spec);
  if (!spec.has_params()) return p;
  const double area = static_cast<double>(spec.kernel_h ? spec.kernel_h * spec.kernel_w : 1);
  const double fan_in = static_cast<double>(spec.in) * area;
  const double fan_out = static_cast<double>(spec.out) * area;
  const double s = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-s, s);
  for (double& w : p.weights.data()) w = dist(rng);
  return p;
}

void check_params(const LayerSpec& spec, const LayerParams& params) {
  if (params.weights.shape() != spec.weight_shape() || params.biases.shape() != spec.bias_shape()) {
    throw DimensionError(to_string(spec.kind) + " layer: parameter shapes " +
                         shape_to_string(params.weights.shape()) + "/" +
                         shape_to_string(params.biases.shape()) + " do not match expected " +
                         shape_to_string(spec.weight_shape()) + "/" +
                         shape_to_string(spec.bias_shape()));
  }
}

namespace {

Tensor dense_forward(const LayerSpec& s, const LayerParams& p, const Tensor& x) {
  Tensor y({s.out});
  const auto w = p.weights.data();
  for (std::size_t o = 0; o < s.out; ++o) {
    double acc = p.biases[o];
    const double* row = w.data() + o * s.in;
    for (std::size_t i = 0; i < s.in; ++i) acc += row[i] * x[i];
    y[o] = acc;
  }
  return y;
}

Tensor conv_forward(const LayerSpec& s, const LayerParams& p, const Tensor& x, const Shape& out_shape) {
  Tensor y(out_shape);
  const std::size_t H = x.dim(1), W = x.dim(2);
  const std::size_t OH = out_shape[1], OW = out_shape[2];
  for (std::size_t oc = 0; oc < s.out; ++oc) {
    for (std::size_t oy = 0; oy < OH; ++oy) {
      for (std::size_t ox = 0; ox < OW; ++ox) {
        double acc = p.biases[oc];
        for (std::size_t ic = 0; ic < s.in; ++ic) {
          for (std::size_t ky = 0; ky < s.kernel_h; ++ky) {
            const double* in_row = x.data().data() + (ic * H + oy + ky) * W + ox;
            const double* w_row =
                p.weights.data().data() + ((oc * s.in + ic) * s.kernel_h + ky) * s.kernel_w;
            for (std::size_t kx = 0; kx < s.kernel_w; ++kx) acc += w_row[kx] * in_row[kx];
          }
        }
        y[(oc * OH + oy) * OW + ox] = acc;
      }
    }
  }
  return y;
}

Tensor maxpool_forward(const Tensor& x, const Shape& out_shape, std::vector<std::size_t>& argmax) {
  Tensor y(out_shape);
  const std::size_t H = x.dim(1), W = x.dim(2);
  const std::size_t C = out_shape[0], OH = out_shape[1], OW = out_shape[2];
  argmax.assign(y.size(), 0);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t oy = 0; oy < OH; ++oy) {
      for (std::size_t ox = 0; ox < OW; ++ox) {
        std::size_t best = (c * H + 2 * oy) * W + 2 * ox;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = (c * H + 2 * oy + dy) * W + 2 * ox + dx;
            // Strict comparison keeps the first (row-major) maximum on ties.
            if (x[idx] > x[best]) best = idx;
          }
        }
        const std::size_t o = (c * OH + oy) * OW + ox;
        y[o] = x[best];
        argmax[o] = best;
      }
    }
  }
  return y;
}

}  // namespace

LayerForward layer_forward(const LayerSpec& spec, const LayerParams& params, const Tensor& input) {
  check_params(spec, params);
  Shape out_shape = spec.output_shape(input.shape());
  LayerForward result;
  result.cache.kind = spec.kind;
  result.cache.output_shape = out_shape;
  switch (spec.kind) {
    case LayerKind::dense:
      result.output = dense_forward(spec, params, input);
      result.cache.input = input;
      break;
    case LayerKind::relu: {
      Tensor y = input;
      for (double& v : y.data()) v = v > 0.0 ? v : 0.0;
      result.output = std::move(y);
      result.cache.input = input;
      break;
    }
    case LayerKind::conv2d:
      result.output = conv_forward(spec, params, input, out_shape);
      result.cache.input = input;
      break;
    case LayerKind::maxpool2d:
      result.output = maxpool_forward(input, out_shape, result.cache.argmax);
      result.cache.input = input;
      break;
    case LayerKind::flatten:
      result.output = input.reshaped(out_shape);
      result.cache.input = input;
      break;
  }
  return result;
}

LayerBackward layer_backward(const LayerSpec& spec, const LayerParams& params,
                             const LayerCache& cache, const Tensor& grad_output) {
  if (cache.kind != spec.kind) {
    throw DimensionError("backward: cache from a " + to_string(cache.kind) +
                         " layer passed to a " + to_string(spec.kind) + " layer");
  }
  if (grad_output.shape() != cache.output_shape) {
    throw DimensionError("backward: " + to_string(spec.kind) + " grad_output shape " +
                         shape_to_string(grad_output.shape()) + " differs from forward output " +
                         shape_to_string(cache.output_shape));
  }
  if (spec.output_shape(cache.input.shape()) != cache.output_shape) {
    throw DimensionError("backward: cache does not match " + to_string(spec.kind) + " spec");
  }
  check_params(spec, params);

  const Tensor& x = cache.input;
  LayerBackward result;
  result.grad_input = Tensor(x.shape());
  result.grad_params = zero_params(spec);
  Tensor& gx = result.grad_input;

  switch (spec.kind) {
    case LayerKind::dense: {
      auto gw = result.grad_params.weights.data();
      const auto w = params.weights.data();
      for (std::size_t o = 0; o < spec.out; ++o) {
        const double g = grad_output[o];
        result.grad_params.biases[o] = g;
        for (std::size_t i = 0; i < spec.in; ++i) {
          gw[o * spec.in + i] = g * x[i];
          gx[i] += w[o * spec.in + i] * g;
        }
      }
      break;
    }
    case LayerKind::relu:
      for (std::size_t i = 0; i < x.size(); ++i) gx[i] = x[i] > 0.0 ? grad_output[i] : 0.0;
      break;
    case LayerKind::conv2d: {
      const std::size_t H = x.dim(1), W = x.dim(2);
      const std::size_t OH = cache.output_shape[1], OW = cache.output_shape[2];
      auto gw = result.grad_params.weights.data();
      const auto w = params.weights.data();
      for (std::size_t oc = 0; oc < spec.out; ++oc) {
        for (std::size_t oy = 0; oy < OH; ++oy) {
          for (std::size_t ox = 0; ox < OW; ++ox) {
            const double g = grad_output[(oc * OH + oy) * OW + ox];
            result.grad_params.biases[oc] += g;
            for (std::size_t ic = 0; ic < spec.in; ++ic) {
              for (std::size_t ky = 0; ky < spec.kernel_h; ++ky) {
                const std::size_t in_base = (ic * H + oy + ky) * W + ox;
                const std::size_t w_base = ((oc * spec.in + ic) * spec.kernel_h + ky) * spec.kernel_w;
                for (std::size_t kx = 0; kx < spec.kernel_w; ++kx) {
                  gw[w_base + kx] += g * x[in_base + kx];
                  gx[in_base + kx] += w[w_base + kx] * g;
                }
              }
            }
          }
        }
      }
      break;
    }
    case LayerKind::maxpool2d:
      if (cache.argmax.size() != grad_output.size()) {
        throw DimensionError("backward: maxpool cache has no routing for this output");
      }
      for (std::size_t o = 0; o < grad_output.size(); ++o) gx[cache.argmax[o]] += grad_output[o];
      break;
    case LayerKind::flatten:
      gx = grad_output.reshaped(x.shape());
      break;
  }
  return result;
}

std::vector<const LayerParams*> make_view(std::span<const LayerParams> params) {
  std::vector<const LayerParams*> view;
  view.reserve(params.size());
  for (const auto& p : params) view.push_back(&p);
  return view;
}

Shape network_output_shape(std::span<const LayerSpec> specs, const Shape& input) {
  Shape shape = input;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    try {
      shape = specs[i].output_shape(shape);
    } catch (const DimensionError& e) {
      throw DimensionError("layer " + std::to_string(i) + ": " + e.what());
    }
  }
  return shape;
}

NetworkPass network_forward(std::span<const LayerSpec> specs, ParamView params, const Tensor& input) {
  if (params.size() != specs.size()) {
    throw DimensionError("network has " + std::to_string(specs.size()) + " layers but " +
                         std::to_string(params.size()) + " parameter blocks");
  }
  NetworkPass pass;
  pass.caches.reserve(specs.size());
  Tensor current = input;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    LayerForward f;
    try {
      f = layer_forward(specs[i], *params[i], current);
    } catch (const DimensionError& e) {
      throw DimensionError("layer " + std::to_string(i) + ": " + e.what());
    }
    current = std::move(f.output);
    pass.caches.push_back(std::move(f.cache));
  }
  pass.output = std::move(current);
  return pass;
}

NetworkPass network_forward(std::span<const LayerSpec> specs, std::span<const LayerParams> params,
                            const Tensor& input) {
  const auto view = make_view(params);
  return network_forward(specs, ParamView(view), input);
}

void add_into(LayerParams& dst, const LayerParams& src) {
  if (dst.weights.shape() != src.weights.shape() || dst.biases.shape() != src.biases.shape()) {
    throw DimensionError("gradient accumulation over mismatched parameter blocks");
  }
  for (std::size_t i = 0; i < src.weights.size(); ++i) dst.weights[i] += src.weights[i];
  for (std::size_t i = 0; i < src.biases.size(); ++i) dst.biases[i] += src.biases[i];
}

Tensor network_backward(std::span<const LayerSpec> specs, ParamView params, const NetworkPass& pass,
                        const Tensor& grad_output, std::span<LayerParams* const> accumulators,
                        const std::optional<InjectedGradient>& injected) {
  if (pass.caches.size() != specs.size() || params.size() != specs.size() ||
      accumulators.size() != specs.size()) {
    throw DimensionError("network_backward: layer count mismatch");
  }
  Tensor grad = grad_output;
  for (std::size_t k = specs.size(); k-- > 0;) {
    LayerBackward b = layer_backward(specs[k], *params[k], pass.caches[k], grad);
    if (specs[k].has_params() && accumulators[k] != nullptr) add_into(*accumulators[k], b.grad_params);
    grad = std::move(b.grad_input);
    if (injected && injected->layer == k) {
      if (injected->grad.shape() != grad.shape()) {
        throw DimensionError("injected gradient shape " + shape_to_string(injected->grad.shape()) +
                             " does not match layer input " + shape_to_string(grad.shape()));
      }
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += injected->grad[i];
    }
  }
  return grad;
}

}  // namespace tsda
