#pragma once

#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "tsda/data.hpp"
#include "tsda/trainer.hpp"
#include "tsda/twostream.hpp"

namespace tsda {

/// Every {shared, coupled} assignment of the non-head layers, head shared.
/// Pattern i couples layer k (0-based) iff bit k of i is set, so the first
/// layer is the least significant bit.
std::vector<std::vector<SharingMode>> enumerate_configs(std::size_t n_parameterized_layers);

struct ConfigScore {
  std::vector<SharingMode> modes;
  std::size_t candidate_index = 0;  // position in the candidate list
  double mmd2_value = 0.0;
  std::optional<double> validation_metric;
  std::optional<StreamPair> model;  // kept when SelectionOptions::keep_models
};

struct SelectionOptions {
  /// Fraction of cfg's epoch budgets used per candidate (at least 1 epoch).
  double epoch_fraction = 0.5;
  /// Worker threads; 0 means hardware concurrency.
  std::size_t workers = 0;
  bool keep_models = false;
};

/// MMD^2 between source-stream head features of eval.source and
/// target-stream head features of eval.target.
double eval_mmd2(const StreamPair& pair, const DomainPair& eval, double sigma);

/// Trains each candidate (pretrain, target init, joint training; same seed
/// for all) and ranks by eval-pool MMD^2 ascending. Ties go to fewer coupled
/// layers, then candidate order. `validation` is scored with the target
/// stream when it has labels.
std::vector<ConfigScore> select_config(const std::vector<std::vector<SharingMode>>& candidates,
                                       const std::vector<LayerSpec>& specs, const DomainDataset& source,
                                       const DomainDataset& target, const DomainPair& eval_pool,
                                       const std::optional<DomainDataset>& validation,
                                       const TrainConfig& cfg, const SelectionOptions& options = {});

/// rank,pattern,mmd2,val_<metric> rows; the last column is empty without
/// validation labels.
void write_selection_csv(std::span<const ConfigScore> ranked, const std::string& metric_name,
                         std::ostream& out);

}  // namespace tsda
