#include "tsda/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <map>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace tsda {

void TrainConfig::validate() const {
  if (!(lambda_w >= 0.0) || !(lambda_u >= 0.0)) throw std::invalid_argument("lambdas must be nonnegative");
  if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
  if (batch_size_source == 0 || batch_size_target == 0) {
    throw std::invalid_argument("batch sizes must be positive");
  }
}

namespace {

// splitmix64 finalizer; gives each consumer of the run seed its own stream.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t kSourceStream = 1;
constexpr std::uint64_t kTargetStream = 2;

std::string fmt_opt(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

}  // namespace

void write_report_csv(std::span<const RunReport> reports, std::ostream& out) {
  const std::string metric = reports.empty() ? "acc" : reports.front().metric_name;
  out << "phase,epoch,L_s,L_t,L_w,L_MMD,total,src_" << metric << ",tgt_" << metric << '\n';
  for (const auto& report : reports) {
    for (const auto& e : report.epochs) {
      out << e.phase << ',' << e.epoch << ',' << format_double(e.source_task) << ','
          << fmt_opt(e.target_task) << ',' << format_double(e.coupling) << ','
          << format_double(e.mmd) << ',' << format_double(e.total) << ','
          << fmt_opt(e.source_metric) << ',' << fmt_opt(e.target_metric) << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Sampling

BatchSampler::BatchSampler(std::size_t dataset_size, std::size_t batch_size, std::uint64_t seed)
    : batch_size_(batch_size), order_(dataset_size), rng_(seed) {
  if (dataset_size == 0) throw std::invalid_argument("cannot sample from an empty dataset");
  if (batch_size == 0 || batch_size > dataset_size) {
    throw std::invalid_argument("batch size " + std::to_string(batch_size) +
                                " invalid for a dataset of " + std::to_string(dataset_size));
  }
  std::iota(order_.begin(), order_.end(), 0);
  reshuffle();
}

void BatchSampler::reshuffle() {
  std::shuffle(order_.begin(), order_.end(), rng_);
  pos_ = 0;
}

std::vector<std::size_t> BatchSampler::next() {
  if (pos_ == order_.size()) reshuffle();
  const std::size_t end = std::min(order_.size(), pos_ + batch_size_);
  std::vector<std::size_t> batch(order_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                 order_.begin() + static_cast<std::ptrdiff_t>(end));
  pos_ = end;
  return batch;
}

std::size_t BatchSampler::batches_per_epoch() const {
  return (order_.size() + batch_size_ - 1) / batch_size_;
}

std::vector<std::size_t> sample_batch(std::size_t dataset_size, std::size_t batch_size,
                                      std::mt19937_64& rng) {
  if (batch_size > dataset_size) {
    throw std::invalid_argument("batch size " + std::to_string(batch_size) + " exceeds dataset size " +
                                std::to_string(dataset_size));
  }
  std::vector<std::size_t> idx(dataset_size);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < batch_size; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, dataset_size - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(batch_size);
  return idx;
}

// ---------------------------------------------------------------------------
// Evaluation helpers

std::size_t predict_class(const Tensor& scores) {
  const auto d = scores.data();
  return static_cast<std::size_t>(std::max_element(d.begin(), d.end()) - d.begin());
}

double evaluate(const StreamPair& pair, Stream stream, const DomainDataset& ds) {
  if (ds.labeled_prefix == 0) throw std::invalid_argument("evaluate: dataset has no labeled samples");
  const auto view = stream == Stream::source ? pair.source_view() : pair.target_view();
  double acc = 0.0;
  for (std::size_t i = 0; i < ds.labeled_prefix; ++i) {
    const Tensor scores = network_forward(pair.specs(), ParamView(view), ds.features[i]).output;
    if (ds.task == TaskType::classification) {
      acc += predict_class(scores) == std::get<std::size_t>(ds.labels[i]) ? 1.0 : 0.0;
    } else {
      acc += squared_distance(scores.data(), std::get<Tensor>(ds.labels[i]).data()) /
             static_cast<double>(scores.size());
    }
  }
  return acc / static_cast<double>(ds.labeled_prefix);
}

std::vector<Tensor> head_features(const StreamPair& pair, Stream stream, const DomainDataset& ds) {
  const auto view = stream == Stream::source ? pair.source_view() : pair.target_view();
  std::vector<Tensor> out;
  out.reserve(ds.size());
  for (const auto& x : ds.features) {
    out.push_back(network_forward(pair.specs(), ParamView(view), x).input_of(pair.head_layer()));
  }
  return out;
}

void check_compatible(const StreamPair& pair, const DomainDataset& ds, TaskLossKind task) {
  const Shape out = pair.output_shape(ds.feature_shape);
  if (out != Shape{ds.task_dim}) {
    throw std::invalid_argument("network output " + shape_to_string(out) + " does not match task width " +
                                std::to_string(ds.task_dim));
  }
  const bool regression = task == TaskLossKind::squared_error;
  if (regression != (ds.task == TaskType::regression)) {
    throw std::invalid_argument("task loss '" + to_string(task) + "' does not suit a " +
                                (ds.task == TaskType::regression ? "regression" : "classification") +
                                " dataset");
  }
}

// ---------------------------------------------------------------------------
// Training

namespace {

using Clock = std::chrono::steady_clock;

std::string metric_name(const DomainDataset& ds) {
  return ds.task == TaskType::classification ? "acc" : "mse";
}

struct Grads {
  std::vector<LayerParams> source;
  std::vector<LayerParams> target;
  std::map<std::size_t, CouplingParams> coupling;  // (d/da, d/db)

  explicit Grads(const StreamPair& pair) {
    for (const auto& spec : pair.specs()) {
      source.push_back(zero_params(spec));
      target.push_back(zero_params(spec));
    }
    for (const auto& [layer, c] : pair.couplings()) coupling[layer] = CouplingParams{0.0, 0.0};
  }

  std::vector<LayerParams*> source_accumulators() {
    std::vector<LayerParams*> acc;
    for (auto& g : source) acc.push_back(&g);
    return acc;
  }

  // Shared layers accumulate into the single source block.
  std::vector<LayerParams*> target_accumulators(const StreamPair& pair) {
    std::vector<LayerParams*> acc;
    for (std::size_t i = 0; i < target.size(); ++i) acc.push_back(pair.is_shared(i) ? &source[i] : &target[i]);
    return acc;
  }
};

void add_blocks(std::vector<ParamBlock>& blocks, const std::string& prefix, std::size_t layer,
                LayerParams& values, const LayerParams& grads) {
  const std::string base = prefix + "/layer" + std::to_string(layer);
  blocks.push_back({base + "/weights", values.weights.data(), grads.weights.data()});
  blocks.push_back({base + "/biases", values.biases.data(), grads.biases.data()});
}

// Forward+backward of the task loss over one batch of one stream. Rows
// without labels get zero output gradient; `injected` optionally adds a
// per-row gradient at the head input. Returns the mean loss over labeled rows
// (nullopt when none are labeled).
std::optional<double> task_pass(const StreamPair& pair, const std::vector<const LayerParams*>& view,
                                const std::vector<NetworkPass>& passes,
                                const std::vector<const Label*>& labels, TaskLossKind task,
                                const std::vector<Tensor>* injected, std::span<LayerParams* const> acc) {
  std::size_t n_labeled = 0;
  for (const Label* y : labels) n_labeled += is_labeled(*y);

  double loss = 0.0;
  for (std::size_t i = 0; i < passes.size(); ++i) {
    Tensor grad_out(passes[i].output.shape());
    if (is_labeled(*labels[i])) {
      LossAndGrad lg = task_loss(task, passes[i].output, *labels[i]);
      loss += lg.loss;
      const double scale = 1.0 / static_cast<double>(n_labeled);
      for (std::size_t k = 0; k < grad_out.size(); ++k) grad_out[k] = lg.grad[k] * scale;
    } else if (injected == nullptr) {
      continue;
    }
    std::optional<InjectedGradient> inj;
    if (injected != nullptr) inj = InjectedGradient{pair.head_layer(), (*injected)[i]};
    network_backward(pair.specs(), ParamView(view), passes[i], grad_out, acc, inj);
  }
  if (n_labeled == 0) return std::nullopt;
  return loss / static_cast<double>(n_labeled);
}

struct EpochAccumulator {
  double source_task = 0.0, coupling = 0.0, mmd = 0.0;
  double target_task = 0.0;
  std::size_t steps = 0, target_steps = 0;

  void add(const LossParts& p, double lambda_w, double lambda_u) {
    source_task += p.source_task;
    coupling += lambda_w * p.coupling_sum;
    mmd += lambda_u * p.mmd;
    if (p.target_task) {
      target_task += *p.target_task;
      ++target_steps;
    }
    ++steps;
  }

  EpochRecord finish(std::string phase, std::size_t epoch) const {
    EpochRecord r;
    r.phase = std::move(phase);
    r.epoch = epoch;
    const double n = static_cast<double>(std::max<std::size_t>(steps, 1));
    r.source_task = source_task / n;
    if (target_steps > 0) r.target_task = target_task / static_cast<double>(target_steps);
    r.coupling = coupling / n;
    r.mmd = mmd / n;
    r.total = r.source_task + r.target_task.value_or(0.0) + r.coupling + r.mmd;
    return r;
  }
};

void check_source(const StreamPair& pair, const DomainDataset& source, const TrainConfig& cfg) {
  cfg.validate();
  if (source.size() == 0) throw std::invalid_argument("source dataset is empty");
  if (!source.fully_labeled()) throw std::invalid_argument("source dataset must be fully labeled");
  check_compatible(pair, source, cfg.task);
}

std::vector<const Label*> labels_of(const DomainDataset& ds, const std::vector<std::size_t>& idx) {
  std::vector<const Label*> out;
  for (std::size_t i : idx) out.push_back(&ds.labels[i]);
  return out;
}

double checked_total(const LossParts& parts, double lambda_w, double lambda_u, const char* phase,
                     std::size_t epoch, std::size_t step) {
  try {
    return total_loss(parts, lambda_w, lambda_u);
  } catch (const std::domain_error&) {
    throw std::runtime_error(std::string(phase) + ": non-finite loss at epoch " + std::to_string(epoch) +
                             " step " + std::to_string(step) + " (L_s=" + format_double(parts.source_task) +
                             " L_t=" + format_double(parts.target_task.value_or(0.0)) +
                             " sum r_w=" + format_double(parts.coupling_sum) +
                             " mmd=" + format_double(parts.mmd) + ")");
  }
}

}  // namespace

RunReport pretrain_source(StreamPair& pair, const DomainDataset& source, const TrainConfig& cfg,
                          const StepObserver& observer) {
  check_source(pair, source, cfg);
  const auto start = Clock::now();
  RunReport report;
  report.metric_name = metric_name(source);

  BatchSampler sampler(source.size(), std::min(cfg.batch_size_source, source.size()),
                       derive_seed(cfg.seed, kSourceStream));
  AdaDelta optimizer(cfg.optimizer);

  for (std::size_t epoch = 0; epoch < cfg.epochs_pretrain; ++epoch) {
    EpochAccumulator acc;
    for (std::size_t step = 0; step < sampler.batches_per_epoch(); ++step) {
      const auto idx = sampler.next();
      Grads grads(pair);
      const auto view = pair.source_view();
      std::vector<NetworkPass> passes;
      for (std::size_t i : idx) passes.push_back(network_forward(pair.specs(), ParamView(view), source.features[i]));
      const auto accs = grads.source_accumulators();
      LossParts parts;
      parts.source_task = *task_pass(pair, view, passes, labels_of(source, idx), cfg.task, nullptr, accs);
      const double total = checked_total(parts, 0.0, 0.0, "pretrain_source", epoch, step);

      std::vector<ParamBlock> blocks;
      for (std::size_t layer : pair.parameterized_layers()) {
        add_blocks(blocks, "source", layer, pair.source_params(layer), grads.source[layer]);
      }
      optimizer.step(blocks);

      acc.add(parts, 0.0, 0.0);
      if (observer) observer({epoch, step, parts, 0.0, 0.0, total});
    }
    EpochRecord rec = acc.finish("pretrain", epoch);
    rec.source_metric = evaluate(pair, Stream::source, source);
    report.epochs.push_back(std::move(rec));
  }
  report.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return report;
}

RunReport joint_train(StreamPair& pair, const DomainDataset& source, const DomainDataset& target,
                      const TrainConfig& cfg, const StepObserver& observer) {
  check_source(pair, source, cfg);
  if (target.size() == 0) {
    if (cfg.lambda_u > 0.0) throw std::invalid_argument("MMD term requires target samples (lambda_u > 0)");
  } else {
    check_compatible(pair, target, cfg.task);
  }
  const auto start = Clock::now();
  RunReport report;
  report.metric_name = metric_name(source);

  BatchSampler source_sampler(source.size(), std::min(cfg.batch_size_source, source.size()),
                              derive_seed(cfg.seed, kSourceStream));
  std::optional<BatchSampler> target_sampler;
  if (target.size() > 0) {
    target_sampler.emplace(target.size(), std::min(cfg.batch_size_target, target.size()),
                           derive_seed(cfg.seed, kTargetStream));
  }
  AdaDelta optimizer(cfg.optimizer);
  const MMDConfig mmd_cfg{cfg.sigma};
  const bool use_mmd = cfg.lambda_u > 0.0;
  const bool use_coupling = cfg.lambda_w > 0.0;

  for (std::size_t epoch = 0; epoch < cfg.epochs_joint; ++epoch) {
    EpochAccumulator acc;
    for (std::size_t step = 0; step < source_sampler.batches_per_epoch(); ++step) {
      const auto src_idx = source_sampler.next();
      const auto tgt_idx = target_sampler ? target_sampler->next() : std::vector<std::size_t>{};
      if (use_mmd && tgt_idx.empty()) throw std::invalid_argument("empty target batch with lambda_u > 0");

      Grads grads(pair);
      const auto src_view = pair.source_view();
      const auto tgt_view = pair.target_view();
      std::vector<NetworkPass> src_passes, tgt_passes;
      for (std::size_t i : src_idx) {
        src_passes.push_back(network_forward(pair.specs(), ParamView(src_view), source.features[i]));
      }
      for (std::size_t i : tgt_idx) {
        tgt_passes.push_back(network_forward(pair.specs(), ParamView(tgt_view), target.features[i]));
      }

      LossParts parts;
      std::vector<Tensor> mmd_src_grad, mmd_tgt_grad;
      if (use_mmd) {
        std::vector<Tensor> fs, ft;
        for (const auto& p : src_passes) fs.push_back(p.input_of(pair.head_layer()));
        for (const auto& p : tgt_passes) ft.push_back(p.input_of(pair.head_layer()));
        MMDResult m = mmd2(fs, ft, mmd_cfg);
        parts.mmd = m.value;
        for (auto* gs : {&m.grad_source, &m.grad_target}) {
          for (auto& g : *gs) {
            for (double& v : g.data()) v *= cfg.lambda_u;
          }
        }
        mmd_src_grad = std::move(m.grad_source);
        mmd_tgt_grad = std::move(m.grad_target);
      }

      const auto src_acc = grads.source_accumulators();
      const auto tgt_acc = grads.target_accumulators(pair);
      parts.source_task = *task_pass(pair, src_view, src_passes, labels_of(source, src_idx), cfg.task,
                                     use_mmd ? &mmd_src_grad : nullptr, src_acc);
      parts.target_task = task_pass(pair, tgt_view, tgt_passes, labels_of(target, tgt_idx), cfg.task,
                                    use_mmd ? &mmd_tgt_grad : nullptr, tgt_acc);

      for (const auto& [layer, c] : pair.couplings()) {
        const LayerParams& ps = pair.source_params(layer);
        const LayerParams& pt = pair.target_params(layer);
        CouplingLoss cl = coupling_loss(cfg.coupling_form, c.a, c.b, flatten_params(ps), flatten_params(pt));
        parts.coupling_sum += cl.loss;
        if (!use_coupling) continue;
        for (double& v : cl.grad_source.data()) v *= cfg.lambda_w;
        for (double& v : cl.grad_target.data()) v *= cfg.lambda_w;
        add_into(grads.source[layer], unflatten_params(cl.grad_source, ps));
        add_into(grads.target[layer], unflatten_params(cl.grad_target, pt));
        grads.coupling[layer].a += cfg.lambda_w * cl.grad_a;
        grads.coupling[layer].b += cfg.lambda_w * cl.grad_b;
      }

      const double total = checked_total(parts, cfg.lambda_w, cfg.lambda_u, "joint_train", epoch, step);

      std::vector<ParamBlock> blocks;
      for (std::size_t layer : pair.parameterized_layers()) {
        add_blocks(blocks, "source", layer, pair.source_params(layer), grads.source[layer]);
        if (!pair.is_shared(layer)) {
          add_blocks(blocks, "target", layer, pair.target_params(layer), grads.target[layer]);
        }
      }
      for (auto& [layer, c] : grads.coupling) {
        CouplingParams& value = pair.coupling(layer);
        const std::string base = "coupling/layer" + std::to_string(layer);
        blocks.push_back({base + "/a", std::span<double>(&value.a, 1), std::span<const double>(&c.a, 1)});
        blocks.push_back({base + "/b", std::span<double>(&value.b, 1), std::span<const double>(&c.b, 1)});
      }
      optimizer.step(blocks);

      acc.add(parts, cfg.lambda_w, cfg.lambda_u);
      if (observer) observer({epoch, step, parts, cfg.lambda_w, cfg.lambda_u, total});
    }
    EpochRecord rec = acc.finish("joint", epoch);
    rec.source_metric = evaluate(pair, Stream::source, source);
    if (target.labeled_prefix > 0) rec.target_metric = evaluate(pair, Stream::target, target);
    report.epochs.push_back(std::move(rec));
  }
  report.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return report;
}

TwoPhaseReport train_two_stream(StreamPair& pair, const DomainDataset& source,
                                const DomainDataset& target, const TrainConfig& cfg) {
  TwoPhaseReport r;
  r.pretrain = pretrain_source(pair, source, cfg);
  pair.init_target_from_source();
  r.joint = joint_train(pair, source, target, cfg);
  return r;
}

}  // namespace tsda
