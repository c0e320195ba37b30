#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tsda/losses.hpp"
#include "tsda/tensor.hpp"

namespace tsda {

enum class TaskType { classification, regression };

/// Labeled source set or partially labeled target set. Only the first
/// `labeled_prefix` samples carry labels; the rest are unlabeled.
struct DomainDataset {
  TaskType task = TaskType::classification;
  std::size_t task_dim = 0;  // class count or regression width
  Shape feature_shape;
  std::vector<Tensor> features;
  std::vector<Label> labels;
  std::size_t labeled_prefix = 0;

  std::size_t size() const { return features.size(); }
  bool fully_labeled() const { return labeled_prefix == size(); }

  /// Throws std::invalid_argument describing the first violated invariant.
  void validate() const;

  friend bool operator==(const DomainDataset&, const DomainDataset&) = default;
};

struct DomainPair {
  DomainDataset source;
  DomainDataset target;
};

/// Copy keeping labels only for the first `n_labeled` samples.
DomainDataset with_labeled_prefix(const DomainDataset& ds, std::size_t n_labeled);

/// Samples at `indices`, in that order. The labeled prefix of the result is
/// the length of its leading run of labeled samples.
DomainDataset subset(const DomainDataset& ds, const std::vector<std::size_t>& indices);

/// Splits off the trailing `fraction` of samples (at least one) as a holdout.
std::pair<DomainDataset, DomainDataset> split_holdout(const DomainDataset& ds, double fraction);

struct MoonsShift {
  std::size_t n_per_domain = 400;
  double noise_sd = 0.1;
  double rotation_deg = 0.0;
  double translation_x = 0.0;
  double translation_y = 0.0;
  double scale = 1.0;
  std::uint64_t seed = 0;
};

/// Standard two-moons source; the target applies x' = scale * R x + t to the
/// same draw, so the identity map reproduces the source exactly. Sample order
/// is shuffled and both classes hold n/2 samples (outer moon gets the extra
/// one for odd n).
DomainPair gen_two_moons_shift(const MoonsShift& p);

struct IntensityShift {
  std::size_t n_per_domain = 300;
  std::size_t grid = 8;
  double gain = 1.0;
  double offset = 0.0;
  double noise_sd = 0.0;
  std::uint64_t seed = 0;
};

inline constexpr std::size_t kPatternClasses = 3;

/// Single-channel grid x grid images of three jittered template shapes
/// (horizontal bar, vertical bar, square outline). Source pixels are the
/// clean template plus noise; target pixels are gain * clean + offset +
/// noise. Both are clamped to [0, 1]. Features have shape [1, grid, grid].
DomainPair gen_intensity_shift_patterns(const IntensityShift& p);

/// Parse failure with the 1-based line it occurred on.
class DatasetParseError : public std::runtime_error {
 public:
  DatasetParseError(std::size_t line, const std::string& detail, const std::string& source = "");
  std::size_t line() const { return line_; }
  const std::string& detail() const { return detail_; }

 private:
  std::size_t line_;
  std::string detail_;
};

std::string format_dataset(const DomainDataset& ds);
DomainDataset parse_dataset(const std::string& text);

void write_dataset(const DomainDataset& ds, const std::filesystem::path& path);
DomainDataset read_dataset(const std::filesystem::path& path);

/// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);

}  // namespace tsda
