#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tsda/layers.hpp"
#include "tsda/losses.hpp"

namespace tsda {

/// How the source and target streams relate at one parameterized layer.
enum class SharingMode : std::uint8_t { shared = 0, coupled = 1, independent = 2 };

std::string to_string(SharingMode mode);

/// Pattern string, one character per parameterized layer: '+' coupled,
/// '-' shared, 'x' independent. Leftmost is the first layer.
std::string pattern_string(const std::vector<SharingMode>& modes);
std::vector<SharingMode> parse_pattern(const std::string& pattern);

/// Two networks of identical topology. Shared layers have a single storage
/// cell that both streams read; coupled and independent layers keep a
/// separate target copy. Coupled layers own one (a, b) pair each.
class StreamPair {
 public:
  /// Builds and seeds a pair. `modes` has one entry per parameterized layer
  /// and the last (head) entry must be `shared`. Target copies start equal
  /// to the source and couplings start at a = 1, b = 0.
  static StreamPair build(std::vector<LayerSpec> specs, std::vector<SharingMode> modes,
                          std::uint64_t seed);

  const std::vector<LayerSpec>& specs() const { return specs_; }
  const std::vector<SharingMode>& modes() const { return modes_; }

  /// Layer indices (into specs()) of the parameterized layers, in order.
  const std::vector<std::size_t>& parameterized_layers() const { return param_layers_; }
  std::size_t head_layer() const { return param_layers_.back(); }

  /// Mode of a layer index; nullopt for parameterless layers.
  std::optional<SharingMode> mode_of_layer(std::size_t layer) const;
  bool is_shared(std::size_t layer) const;

  /// The coupled layer indices (the set the weight regularizer ranges over).
  std::vector<std::size_t> coupled_layers() const;

  const LayerParams& source_params(std::size_t layer) const { return source_.at(layer); }
  LayerParams& source_params(std::size_t layer) { return source_.at(layer); }
  /// For a shared layer this is the source storage itself.
  const LayerParams& target_params(std::size_t layer) const;
  LayerParams& target_params(std::size_t layer);

  std::vector<const LayerParams*> source_view() const;
  std::vector<const LayerParams*> target_view() const;

  const std::map<std::size_t, CouplingParams>& couplings() const { return couplings_; }
  CouplingParams& coupling(std::size_t layer);

  /// Copies every non-shared source layer into its target copy and resets all
  /// couplings to the identity map.
  void init_target_from_source();

  NetworkPass pass_source(const Tensor& x) const;
  NetworkPass pass_target(const Tensor& x) const;
  Tensor forward_source(const Tensor& x) const { return pass_source(x).output; }
  Tensor forward_target(const Tensor& x) const { return pass_target(x).output; }

  /// Sum of r_w over the coupled layers.
  double coupling_sum(CouplingForm form) const;

  /// Throws DimensionError if the stack does not compose over `input`.
  Shape output_shape(const Shape& input) const;

  friend bool operator==(const StreamPair&, const StreamPair&) = default;

 private:
  StreamPair() = default;

  std::vector<LayerSpec> specs_;
  std::vector<SharingMode> modes_;
  std::vector<std::size_t> param_layers_;
  std::vector<LayerParams> source_;
  std::vector<LayerParams> target_;  // empty blocks for shared/parameterless layers
  std::map<std::size_t, CouplingParams> couplings_;

  friend StreamPair decode_checkpoint(const std::string& bytes);
};

/// Weights followed by biases as one rank-1 blob.
Tensor flatten_params(const LayerParams& p);
/// Inverse of flatten_params, shaped like `like`.
LayerParams unflatten_params(const Tensor& flat, const LayerParams& like);

/// Raised for malformed checkpoint bytes.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary checkpoint: magic "TSDA-CKPT\0", u32 version, layer specs, modes,
/// little-endian f64 parameter blocks (source, then target for non-shared
/// layers), couplings.
std::string encode_checkpoint(const StreamPair& pair);
StreamPair decode_checkpoint(const std::string& bytes);

void save_checkpoint(const StreamPair& pair, const std::filesystem::path& path);
StreamPair load_checkpoint(const std::filesystem::path& path);

}  // namespace tsda
