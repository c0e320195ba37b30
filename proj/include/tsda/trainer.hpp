#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tsda/data.hpp"
#include "tsda/losses.hpp"
#include "tsda/optim.hpp"
#include "tsda/twostream.hpp"

namespace tsda {

struct TrainConfig {
  double lambda_w = 1.0;
  double lambda_u = 1.0;
  double sigma = 1.0;
  CouplingForm coupling_form = CouplingForm::exponential;
  std::size_t batch_size_source = 32;
  std::size_t batch_size_target = 32;
  std::size_t epochs_pretrain = 30;
  std::size_t epochs_joint = 30;
  std::uint64_t seed = 0;
  TaskLossKind task = TaskLossKind::softmax_cross_entropy;
  AdaDeltaConfig optimizer;

  void validate() const;
};

/// Epoch means of the loss terms. `coupling` and `mmd` are already weighted
/// (lambda_w * sum r_w and lambda_u * r_u), so total is their plain sum.
struct EpochRecord {
  std::string phase;
  std::size_t epoch = 0;
  double source_task = 0.0;
  std::optional<double> target_task;
  double coupling = 0.0;
  double mmd = 0.0;
  double total = 0.0;
  std::optional<double> source_metric;
  std::optional<double> target_metric;
};

struct RunReport {
  std::vector<EpochRecord> epochs;
  std::string metric_name;  // "acc" for classification, "mse" for regression
  double wall_seconds = 0.0;
};

/// CSV with columns phase,epoch,L_s,L_t,L_w,L_MMD,total,src_<m>,tgt_<m>.
/// Absent values are written as empty cells. Wall-clock time is not written.
void write_report_csv(std::span<const RunReport> reports, std::ostream& out);

/// Unweighted terms of one optimization step plus the total it produced.
struct StepRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;
  LossParts parts;
  double lambda_w = 0.0;
  double lambda_u = 0.0;
  double total = 0.0;
};

using StepObserver = std::function<void(const StepRecord&)>;

/// Epoch-based sampler: each pass over the data is a fresh seeded
/// permutation consumed in consecutive batches; the last batch of a pass may
/// be shorter.
class BatchSampler {
 public:
  BatchSampler(std::size_t dataset_size, std::size_t batch_size, std::uint64_t seed);

  std::vector<std::size_t> next();
  std::size_t batches_per_epoch() const;

 private:
  void reshuffle();

  std::size_t batch_size_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
  std::mt19937_64 rng_;
};

/// One batch of distinct indices drawn uniformly from [0, dataset_size).
std::vector<std::size_t> sample_batch(std::size_t dataset_size, std::size_t batch_size,
                                      std::mt19937_64& rng);

/// Minimizes the mean source task loss over the source stream only.
RunReport pretrain_source(StreamPair& pair, const DomainDataset& source, const TrainConfig& cfg,
                          const StepObserver& observer = {});

/// Jointly minimizes L_s + L_t + lambda_w sum r_w + lambda_u MMD^2 over
/// mini-batches of both domains. Expects a pre-trained, target-initialized
/// pair. L_t uses the labeled rows of each target batch and is skipped when
/// a batch has none; MMD uses every row of both batches, computed on the
/// representation entering the shared head.
RunReport joint_train(StreamPair& pair, const DomainDataset& source, const DomainDataset& target,
                      const TrainConfig& cfg, const StepObserver& observer = {});

struct TwoPhaseReport {
  RunReport pretrain;
  RunReport joint;
};

/// pretrain_source, init_target_from_source, joint_train.
TwoPhaseReport train_two_stream(StreamPair& pair, const DomainDataset& source,
                                const DomainDataset& target, const TrainConfig& cfg);

enum class Stream { source, target };

std::size_t predict_class(const Tensor& scores);

/// Accuracy (classification) or per-component mean squared error
/// (regression) of one stream over the labeled samples of `ds`.
double evaluate(const StreamPair& pair, Stream stream, const DomainDataset& ds);

/// Representations entering the head layer for every sample of `ds`.
std::vector<Tensor> head_features(const StreamPair& pair, Stream stream, const DomainDataset& ds);

/// Checks that `ds` fits the network input and head width and that `task`
/// suits the dataset kind. Throws std::invalid_argument.
void check_compatible(const StreamPair& pair, const DomainDataset& ds, TaskLossKind task);

}  // namespace tsda
