#pragma once

#include <string>
#include <vector>

#include "tsda/layers.hpp"
#include "tsda/tensor.hpp"

namespace tsda {

/// Parses a comma-separated layer list such as
///
///   conv:4:3,relu,pool,flatten,dense:16,relu,dense:3
///
/// Tokens are `dense:OUT`, `conv:OUT_CHANNELS:K` or `conv:OUT_CHANNELS:KHxKW`,
/// `relu`, `pool` and `flatten`. Input widths and channel counts are inferred
/// by propagating `input_shape` through the stack, so the result always
/// composes. Throws std::invalid_argument on malformed text and
/// DimensionError when a layer does not fit its input.
std::vector<LayerSpec> parse_architecture(const std::string& text, const Shape& input_shape);

/// Inverse of parse_architecture (input sizes are implicit).
std::string format_architecture(const std::vector<LayerSpec>& specs);

}  // namespace tsda
