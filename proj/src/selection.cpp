#include "tsda/selection.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace tsda {

std::vector<std::vector<SharingMode>> enumerate_configs(std::size_t n_parameterized_layers) {
  if (n_parameterized_layers == 0) throw std::invalid_argument("need at least one parameterized layer");
  const std::size_t free_layers = n_parameterized_layers - 1;
  if (free_layers >= 20) throw std::invalid_argument("too many layers to enumerate");
  std::vector<std::vector<SharingMode>> out;
  for (std::size_t bits = 0; bits < (std::size_t{1} << free_layers); ++bits) {
    std::vector<SharingMode> modes(n_parameterized_layers, SharingMode::shared);
    for (std::size_t k = 0; k < free_layers; ++k) {
      if (bits & (std::size_t{1} << k)) modes[k] = SharingMode::coupled;
    }
    out.push_back(std::move(modes));
  }
  return out;
}

double eval_mmd2(const StreamPair& pair, const DomainPair& eval, double sigma) {
  const auto fs = head_features(pair, Stream::source, eval.source);
  const auto ft = head_features(pair, Stream::target, eval.target);
  return mmd2(fs, ft, MMDConfig{sigma}, false).value;
}

namespace {

std::size_t scaled_epochs(std::size_t epochs, double fraction) {
  if (epochs == 0) return 0;
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(epochs))));
}

std::size_t coupled_count(const std::vector<SharingMode>& modes) {
  return static_cast<std::size_t>(std::count(modes.begin(), modes.end(), SharingMode::coupled));
}

}  // namespace

std::vector<ConfigScore> select_config(const std::vector<std::vector<SharingMode>>& candidates,
                                       const std::vector<LayerSpec>& specs, const DomainDataset& source,
                                       const DomainDataset& target, const DomainPair& eval_pool,
                                       const std::optional<DomainDataset>& validation,
                                       const TrainConfig& cfg, const SelectionOptions& options) {
  if (candidates.empty()) throw std::invalid_argument("select_config: no candidates");
  if (!(options.epoch_fraction > 0.0)) throw std::invalid_argument("epoch fraction must be positive");

  TrainConfig run_cfg = cfg;
  run_cfg.epochs_pretrain = scaled_epochs(cfg.epochs_pretrain, options.epoch_fraction);
  run_cfg.epochs_joint = scaled_epochs(cfg.epochs_joint, options.epoch_fraction);

  std::vector<ConfigScore> scores(candidates.size());
  std::vector<std::exception_ptr> errors(candidates.size());

  auto run_one = [&](std::size_t i) {
    try {
      StreamPair pair = StreamPair::build(specs, candidates[i], run_cfg.seed);
      train_two_stream(pair, source, target, run_cfg);
      ConfigScore& s = scores[i];
      s.modes = candidates[i];
      s.candidate_index = i;
      s.mmd2_value = eval_mmd2(pair, eval_pool, run_cfg.sigma);
      if (validation && validation->labeled_prefix > 0) {
        s.validation_metric = evaluate(pair, Stream::target, *validation);
      }
      if (options.keep_models) s.model = std::move(pair);
    } catch (const std::exception& e) {
      errors[i] = std::make_exception_ptr(std::runtime_error(
          "candidate \"" + pattern_string(candidates[i]) + "\": " + e.what()));
    }
  };

  std::size_t workers = options.workers ? options.workers : std::thread::hardware_concurrency();
  workers = std::clamp<std::size_t>(workers, 1, candidates.size());
  if (workers == 1) {
    for (std::size_t i = 0; i < candidates.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < candidates.size(); i = next++) run_one(i);
      });
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::stable_sort(scores.begin(), scores.end(), [](const ConfigScore& a, const ConfigScore& b) {
    if (a.mmd2_value != b.mmd2_value) return a.mmd2_value < b.mmd2_value;
    const std::size_t ca = coupled_count(a.modes), cb = coupled_count(b.modes);
    if (ca != cb) return ca < cb;
    return a.candidate_index < b.candidate_index;
  });
  return scores;
}

void write_selection_csv(std::span<const ConfigScore> ranked, const std::string& metric_name,
                         std::ostream& out) {
  out << "rank,pattern,mmd2,val_" << metric_name << '\n';
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    const auto& s = ranked[r];
    out << r + 1 << ',' << pattern_string(s.modes) << ',' << format_double(s.mmd2_value) << ','
        << (s.validation_metric ? format_double(*s.validation_metric) : std::string()) << '\n';
  }
}

}  // namespace tsda
