#include "tsda/arch.hpp"

#include <charconv>
#include <stdexcept>

namespace tsda {

namespace {

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = text.find(sep, start);
    parts.push_back(text.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return parts;
}

std::size_t parse_positive(const std::string& s, const std::string& token) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || v == 0) {
    throw std::invalid_argument("architecture token \"" + token + "\": expected a positive integer, got \"" +
                                s + "\"");
  }
  return v;
}

}  // namespace

std::vector<LayerSpec> parse_architecture(const std::string& text, const Shape& input_shape) {
  if (text.empty()) throw std::invalid_argument("empty architecture");
  std::vector<LayerSpec> specs;
  Shape shape = input_shape;
  for (const std::string& token : split(text, ',')) {
    const auto fields = split(token, ':');
    const std::string& name = fields[0];
    LayerSpec spec;
    if (name == "dense") {
      if (fields.size() != 2) throw std::invalid_argument("expected dense:OUT, got \"" + token + "\"");
      if (shape.size() != 1) {
        throw DimensionError("dense layer needs a rank-1 input, got " + shape_to_string(shape) +
                             " (add flatten before it)");
      }
      spec = LayerSpec::dense(shape[0], parse_positive(fields[1], token));
    } else if (name == "conv") {
      if (fields.size() != 3) throw std::invalid_argument("expected conv:OUT:K or conv:OUT:KHxKW, got \"" + token + "\"");
      if (shape.size() != 3) throw DimensionError("conv layer needs a [C,H,W] input, got " + shape_to_string(shape));
      const auto kernel = split(fields[2], 'x');
      if (kernel.size() > 2) throw std::invalid_argument("bad kernel size in \"" + token + "\"");
      const std::size_t kh = parse_positive(kernel[0], token);
      const std::size_t kw = kernel.size() == 2 ? parse_positive(kernel[1], token) : kh;
      spec = LayerSpec::conv2d(shape[0], parse_positive(fields[1], token), kh, kw);
    } else if (fields.size() == 1 && name == "relu") {
      spec = LayerSpec::relu();
    } else if (fields.size() == 1 && name == "pool") {
      spec = LayerSpec::maxpool2d();
    } else if (fields.size() == 1 && name == "flatten") {
      spec = LayerSpec::flatten();
    } else {
      throw std::invalid_argument("unknown architecture token \"" + token + "\"");
    }
    shape = spec.output_shape(shape);
    specs.push_back(spec);
  }
  return specs;
}

std::string format_architecture(const std::vector<LayerSpec>& specs) {
  std::string out;
  for (const auto& s : specs) {
    if (!out.empty()) out += ',';
    switch (s.kind) {
      case LayerKind::dense: out += "dense:" + std::to_string(s.out); break;
      case LayerKind::conv2d:
        out += "conv:" + std::to_string(s.out) + ':' + std::to_string(s.kernel_h);
        if (s.kernel_w != s.kernel_h) out += 'x' + std::to_string(s.kernel_w);
        break;
      case LayerKind::relu: out += "relu"; break;
      case LayerKind::maxpool2d: out += "pool"; break;
      case LayerKind::flatten: out += "flatten"; break;
    }
  }
  return out;
}

}  // namespace tsda
