// tsda: generate benchmarks, train two-stream models, search sharing
// patterns and evaluate checkpoints.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tsda/arch.hpp"
#include "tsda/data.hpp"
#include "tsda/metrics.hpp"
#include "tsda/selection.hpp"
#include "tsda/trainer.hpp"
#include "tsda/twostream.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace tsda;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUnreadable = 2;

// An input file that cannot be opened at all.
class UnreadableInput : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void require_readable(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in || fs::is_directory(path)) throw UnreadableInput("cannot read " + path);
}

DomainDataset load_dataset(const std::string& path) {
  require_readable(path);
  return read_dataset(path);
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  return out;
}

std::uint64_t default_seed() {
  if (const char* env = std::getenv("TSDA_SEED")) {
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(env, &used);
      if (used == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw CLI::ValidationError("TSDA_SEED", std::string("not an unsigned integer: ") + env);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Shared training flags

struct TrainFlags {
  std::string src, tgt, arch;
  std::string form = "exp";
  std::string loss = "softmax";
  double lambda_w = 1.0, lambda_u = 1.0, sigma = 1.0;
  double rho = 0.95, epsilon = 1e-6;
  std::size_t epochs_pretrain = 30, epochs_joint = 30;
  std::size_t batch_src = 32, batch_tgt = 32;
  std::uint64_t seed = 0;
  std::optional<std::size_t> target_labeled;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--src", f.src, "Source dataset file")->required();
  cmd->add_option("--tgt", f.tgt, "Target dataset file")->required();
  cmd->add_option("--arch", f.arch, "Layer list, e.g. dense:16,relu,dense:2")->required();
  cmd->add_option("--lambda-w", f.lambda_w, "Weight of the coupling regularizer")->check(CLI::NonNegativeNumber);
  cmd->add_option("--lambda-u", f.lambda_u, "Weight of the MMD regularizer")->check(CLI::NonNegativeNumber);
  cmd->add_option("--sigma", f.sigma, "RBF kernel bandwidth")->check(CLI::PositiveNumber);
  cmd->add_option("--form", f.form, "Coupling form")->check(CLI::IsMember({"l2", "exp", "exponential"}));
  cmd->add_option("--loss", f.loss, "Task loss")->check(CLI::IsMember({"hinge", "softmax", "squared"}));
  cmd->add_option("--epochs-pretrain", f.epochs_pretrain, "Source pre-training epochs");
  cmd->add_option("--epochs-joint", f.epochs_joint, "Joint training epochs");
  cmd->add_option("--batch-src", f.batch_src, "Source batch size")->check(CLI::PositiveNumber);
  cmd->add_option("--batch-tgt", f.batch_tgt, "Target batch size")->check(CLI::PositiveNumber);
  cmd->add_option("--rho", f.rho, "AdaDelta decay")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--eps", f.epsilon, "AdaDelta conditioning constant")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", f.seed, "Run seed (default: $TSDA_SEED or 0)");
  cmd->add_option("--target-labeled", f.target_labeled,
                  "Keep labels for only the first N target samples");
}

TrainConfig make_config(const TrainFlags& f, TaskType task) {
  TrainConfig cfg;
  cfg.lambda_w = f.lambda_w;
  cfg.lambda_u = f.lambda_u;
  cfg.sigma = f.sigma;
  cfg.coupling_form = parse_coupling_form(f.form);
  cfg.batch_size_source = f.batch_src;
  cfg.batch_size_target = f.batch_tgt;
  cfg.epochs_pretrain = f.epochs_pretrain;
  cfg.epochs_joint = f.epochs_joint;
  cfg.seed = f.seed;
  cfg.task = parse_task_loss(f.loss);
  if ((task == TaskType::regression) != (cfg.task == TaskLossKind::squared_error)) {
    throw std::invalid_argument("loss \"" + f.loss + "\" does not suit a " +
                                (task == TaskType::regression ? "regression" : "classification") + " dataset");
  }
  cfg.optimizer = {f.rho, f.epsilon};
  cfg.validate();
  return cfg;
}

json config_json(const TrainConfig& cfg) {
  return json{{"lambda_w", cfg.lambda_w},
              {"lambda_u", cfg.lambda_u},
              {"sigma", cfg.sigma},
              {"coupling_form", to_string(cfg.coupling_form)},
              {"task_loss", to_string(cfg.task)},
              {"batch_size_source", cfg.batch_size_source},
              {"batch_size_target", cfg.batch_size_target},
              {"epochs_pretrain", cfg.epochs_pretrain},
              {"epochs_joint", cfg.epochs_joint},
              {"seed", cfg.seed},
              {"adadelta_rho", cfg.optimizer.rho},
              {"adadelta_epsilon", cfg.optimizer.epsilon}};
}

struct Inputs {
  DomainDataset source, target;
  std::vector<LayerSpec> specs;
};

Inputs load_inputs(const TrainFlags& f) {
  Inputs in{load_dataset(f.src), load_dataset(f.tgt), {}};
  if (in.source.feature_shape != in.target.feature_shape || in.source.task != in.target.task ||
      in.source.task_dim != in.target.task_dim) {
    throw std::invalid_argument("source and target datasets describe different tasks or feature shapes");
  }
  if (f.target_labeled) {
    if (*f.target_labeled > in.target.labeled_prefix) {
      throw std::invalid_argument("--target-labeled " + std::to_string(*f.target_labeled) + " exceeds the " +
                                  std::to_string(in.target.labeled_prefix) + " labeled samples in " + f.tgt);
    }
    in.target = with_labeled_prefix(in.target, *f.target_labeled);
  }
  in.specs = parse_architecture(f.arch, in.source.feature_shape);
  return in;
}

void print_json(const json& j) { std::cout << j.dump(2) << '\n'; }

// ---------------------------------------------------------------------------
// gen

struct GenFlags {
  std::string kind, out_src, out_tgt;
  std::size_t n = 400;
  double noise = 0.1;
  double rot = 0.0;
  std::vector<double> shift{0.0, 0.0};
  double scale = 1.0;
  double gain = 1.0, offset = 0.0;
  std::size_t grid = 8;
  std::uint64_t seed = 0;
};

int run_gen(const GenFlags& f) {
  DomainPair d;
  json params;
  if (f.kind == "moons") {
    if (f.shift.size() != 2) throw std::invalid_argument("--shift takes two values x,y");
    MoonsShift p{f.n, f.noise, f.rot, f.shift[0], f.shift[1], f.scale, f.seed};
    d = gen_two_moons_shift(p);
    params = {{"n", f.n}, {"noise", f.noise}, {"rotation_deg", f.rot}, {"shift", f.shift},
              {"scale", f.scale}, {"seed", f.seed}};
  } else {
    IntensityShift p{f.n, f.grid, f.gain, f.offset, f.noise, f.seed};
    d = gen_intensity_shift_patterns(p);
    params = {{"n", f.n}, {"grid", f.grid}, {"gain", f.gain}, {"offset", f.offset},
              {"noise", f.noise}, {"seed", f.seed}};
  }
  write_dataset(d.source, f.out_src);
  write_dataset(d.target, f.out_tgt);
  print_json({{"command", "gen"}, {"kind", f.kind}, {"params", params},
              {"outputs", {{"source", f.out_src}, {"target", f.out_tgt}}}});
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainOnlyFlags {
  std::string pattern, ckpt, report, manifest;
};

int run_train(const TrainFlags& f, const TrainOnlyFlags& t) {
  const Inputs in = load_inputs(f);
  const TrainConfig cfg = make_config(f, in.source.task);
  const auto modes = parse_pattern(t.pattern);
  StreamPair pair = StreamPair::build(in.specs, modes, cfg.seed);

  const TwoPhaseReport r = train_two_stream(pair, in.source, in.target, cfg);

  save_checkpoint(pair, t.ckpt);
  {
    auto out = open_output(t.report);
    const RunReport both[] = {r.pretrain, r.joint};
    write_report_csv(both, out);
  }
  json results = json::object();
  const std::string metric = r.joint.metric_name.empty() ? r.pretrain.metric_name : r.joint.metric_name;
  const auto& last = r.joint.epochs.empty() ? r.pretrain.epochs : r.joint.epochs;
  if (!last.empty()) {
    if (last.back().source_metric) results["source_" + metric] = *last.back().source_metric;
    if (last.back().target_metric) results["target_" + metric] = *last.back().target_metric;
  }
  json manifest{{"command", "train"},
                {"source", f.src},
                {"target", f.tgt},
                {"target_labeled", in.target.labeled_prefix},
                {"arch", format_architecture(in.specs)},
                {"pattern", pattern_string(modes)},
                {"config", config_json(cfg)},
                {"outputs", {{"checkpoint", t.ckpt}, {"report", t.report}}},
                {"results", results}};
  if (!t.manifest.empty()) open_output(t.manifest) << manifest.dump(2) << '\n';
  print_json(manifest);
  return 0;
}

// ---------------------------------------------------------------------------
// select

struct SelectFlags {
  std::string report, val;
  std::size_t workers = 0;
  double epoch_fraction = 0.5;
  double holdout = 0.2;
};

int run_select(const TrainFlags& f, const SelectFlags& s) {
  Inputs in = load_inputs(f);
  const TrainConfig cfg = make_config(f, in.source.task);
  std::optional<DomainDataset> validation;
  if (!s.val.empty()) validation = load_dataset(s.val);

  auto [src_train, src_eval] = split_holdout(in.source, s.holdout);
  auto [tgt_train, tgt_eval] = split_holdout(in.target, s.holdout);
  std::size_t n_params = 0;
  for (const auto& spec : in.specs) n_params += spec.has_params();

  SelectionOptions opts;
  opts.workers = s.workers;
  opts.epoch_fraction = s.epoch_fraction;
  const auto ranked = select_config(enumerate_configs(n_params), in.specs, src_train, tgt_train,
                                    {src_eval, tgt_eval}, validation, cfg, opts);
  const std::string metric = in.source.task == TaskType::classification ? "acc" : "mse";
  {
    auto out = open_output(s.report);
    write_selection_csv(ranked, metric, out);
  }
  print_json({{"command", "select"},
              {"source", f.src},
              {"target", f.tgt},
              {"validation", s.val.empty() ? json(nullptr) : json(s.val)},
              {"target_labeled", tgt_train.labeled_prefix},
              {"arch", format_architecture(in.specs)},
              {"holdout", s.holdout},
              {"epoch_fraction", s.epoch_fraction},
              {"candidates", ranked.size()},
              {"config", config_json(cfg)},
              {"outputs", {{"report", s.report}}},
              {"selected", pattern_string(ranked.front().modes)}});
  return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalFlags {
  std::string ckpt, data, stream = "target", metrics_out, pr_out;
  std::size_t positive_class = 1;
  bool pcp = false;
  double radius = 2.0;
};

int run_eval(const EvalFlags& f) {
  require_readable(f.ckpt);
  const StreamPair pair = load_checkpoint(f.ckpt);
  const DomainDataset ds = load_dataset(f.data);
  const Stream stream = f.stream == "source" ? Stream::source : Stream::target;
  const bool regression = ds.task == TaskType::regression;
  check_compatible(pair, ds, regression ? TaskLossKind::squared_error : TaskLossKind::softmax_cross_entropy);
  if (ds.labeled_prefix == 0) throw std::invalid_argument(f.data + " has no labeled samples to evaluate");
  if (f.pcp && !regression) throw std::invalid_argument("--pcp needs a regression (landmark) dataset");
  if (!f.pr_out.empty() && (regression || ds.task_dim != 2)) {
    throw std::invalid_argument("--pr-out needs a binary classification dataset");
  }
  if (f.positive_class >= 2 && !f.pr_out.empty()) throw std::invalid_argument("--positive-class must be 0 or 1");

  std::vector<Tensor> outputs;
  for (std::size_t i = 0; i < ds.labeled_prefix; ++i) {
    outputs.push_back(stream == Stream::source ? pair.forward_source(ds.features[i])
                                               : pair.forward_target(ds.features[i]));
  }

  json results = json::object();
  std::vector<std::pair<std::string, double>> rows;
  if (!regression) {
    std::vector<std::size_t> pred, truth;
    for (std::size_t i = 0; i < outputs.size(); ++i) {
      pred.push_back(predict_class(outputs[i]));
      truth.push_back(std::get<std::size_t>(ds.labels[i]));
    }
    rows.emplace_back("accuracy", accuracy(pred, truth));
    if (!f.pr_out.empty()) {
      // Score = margin of the positive class; monotone in its softmax probability.
      const std::size_t pos = f.positive_class, neg = 1 - pos;
      std::vector<double> scores;
      auto positives = std::make_unique<bool[]>(truth.size());
      for (std::size_t i = 0; i < outputs.size(); ++i) {
        scores.push_back(outputs[i][pos] - outputs[i][neg]);
        positives[i] = truth[i] == pos;
      }
      const PRCurve curve = pr_curve(scores, std::span<const bool>(positives.get(), truth.size()));
      auto out = open_output(f.pr_out);
      write_pr_csv(curve, out);
      rows.emplace_back("average_precision", average_precision(curve));
    }
  } else {
    double se = 0.0;
    for (std::size_t i = 0; i < outputs.size(); ++i) {
      const Tensor& y = std::get<Tensor>(ds.labels[i]);
      se += squared_distance(outputs[i].data(), y.data());
    }
    rows.emplace_back("mse", se / static_cast<double>(outputs.size() * ds.task_dim));
    if (f.pcp) {
      if (ds.task_dim % 2 != 0) throw std::invalid_argument("--pcp needs an even number of outputs (x,y pairs)");
      const std::size_t n_landmarks = ds.task_dim / 2;
      std::vector<LandmarkSet> pred, truth;
      for (std::size_t i = 0; i < outputs.size(); ++i) {
        const Tensor& y = std::get<Tensor>(ds.labels[i]);
        LandmarkSet p, t;
        for (std::size_t l = 0; l < n_landmarks; ++l) {
          p.push_back({outputs[i][2 * l], outputs[i][2 * l + 1]});
          t.push_back({y[2 * l], y[2 * l + 1]});
        }
        pred.push_back(std::move(p));
        truth.push_back(std::move(t));
      }
      const PcpScore pcp = pcp_score(pred, truth, f.radius);
      rows.emplace_back("pcp_mean", pcp.mean);
      for (std::size_t l = 0; l < n_landmarks; ++l) {
        rows.emplace_back("pcp_landmark" + std::to_string(l), pcp.per_landmark[l]);
      }
    }
  }

  if (!f.metrics_out.empty()) {
    auto out = open_output(f.metrics_out);
    out << "metric,value\n";
    out << "samples," << outputs.size() << '\n';
    for (const auto& [name, value] : rows) out << name << ',' << format_double(value) << '\n';
  }
  for (const auto& [name, value] : rows) results[name] = value;
  json outputs_json = json::object();
  if (!f.metrics_out.empty()) outputs_json["metrics"] = f.metrics_out;
  if (!f.pr_out.empty()) outputs_json["pr_curve"] = f.pr_out;
  print_json({{"command", "eval"},
              {"checkpoint", f.ckpt},
              {"data", f.data},
              {"stream", f.stream},
              {"samples", outputs.size()},
              {"pattern", pattern_string(pair.modes())},
              {"arch", format_architecture(pair.specs())},
              {"outputs", outputs_json},
              {"results", results}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stream domain adaptation: data generation, training, pattern search, evaluation"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  try {
    seed = default_seed();
  } catch (const CLI::Error& e) {
    return app.exit(e);
  }

  GenFlags gen;
  gen.seed = seed;
  auto* gen_cmd = app.add_subcommand("gen", "Write a synthetic source/target dataset pair");
  gen_cmd->add_option("--kind", gen.kind, "moons or patterns")->required()->check(CLI::IsMember({"moons", "patterns"}));
  gen_cmd->add_option("--n", gen.n, "Samples per domain");
  gen_cmd->add_option("--noise", gen.noise, "Noise standard deviation")->check(CLI::NonNegativeNumber);
  gen_cmd->add_option("--rot", gen.rot, "moons: target rotation in degrees");
  gen_cmd->add_option("--shift", gen.shift, "moons: target translation x,y")->delimiter(',')->expected(2);
  gen_cmd->add_option("--scale", gen.scale, "moons: target scale");
  gen_cmd->add_option("--gain", gen.gain, "patterns: target intensity gain");
  gen_cmd->add_option("--offset", gen.offset, "patterns: target intensity offset");
  gen_cmd->add_option("--grid", gen.grid, "patterns: image side length");
  gen_cmd->add_option("--seed", gen.seed, "Generator seed (default: $TSDA_SEED or 0)");
  gen_cmd->add_option("--out-src", gen.out_src, "Source output file")->required();
  gen_cmd->add_option("--out-tgt", gen.out_tgt, "Target output file")->required();

  TrainFlags train;
  train.seed = seed;
  TrainOnlyFlags train_only;
  auto* train_cmd = app.add_subcommand("train", "Pre-train the source stream, then train both streams jointly");
  add_train_flags(train_cmd, train);
  train_cmd->add_option("--pattern", train_only.pattern,
                        "Per parameterized layer: + coupled, - shared, x independent (head last, shared)")
      ->required();
  train_cmd->add_option("--ckpt", train_only.ckpt, "Checkpoint output file")->required();
  train_cmd->add_option("--report", train_only.report, "Per-epoch CSV report output file")->required();
  train_cmd->add_option("--manifest", train_only.manifest, "Also write the run manifest to this file");

  TrainFlags select;
  select.seed = seed;
  SelectFlags select_only;
  auto* select_cmd = app.add_subcommand("select", "Train every shared/coupled pattern and rank by held-out MMD^2");
  add_train_flags(select_cmd, select);
  select_cmd->add_option("--report", select_only.report, "Ranking CSV output file")->required();
  select_cmd->add_option("--val", select_only.val, "Labeled target validation set scored per candidate");
  select_cmd->add_option("--workers", select_only.workers, "Worker threads (0 = all cores)");
  select_cmd->add_option("--epoch-fraction", select_only.epoch_fraction, "Share of the epoch budgets per candidate")
      ->check(CLI::Range(0.0, 1.0));
  select_cmd->add_option("--holdout", select_only.holdout, "Share of each domain held out for the MMD pool")
      ->check(CLI::Range(0.0, 1.0));

  EvalFlags eval;
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on a labeled dataset");
  eval_cmd->add_option("--ckpt", eval.ckpt, "Checkpoint file")->required();
  eval_cmd->add_option("--data", eval.data, "Dataset file")->required();
  eval_cmd->add_option("--stream", eval.stream, "Stream to evaluate")->check(CLI::IsMember({"source", "target"}));
  eval_cmd->add_option("--metrics-out", eval.metrics_out, "Metrics CSV output file");
  eval_cmd->add_option("--pr-out", eval.pr_out, "Precision-recall CSV output file (binary tasks)");
  eval_cmd->add_option("--positive-class", eval.positive_class, "Positive class for the PR curve");
  eval_cmd->add_flag("--pcp", eval.pcp, "Report PCP landmark scores (regression tasks)");
  eval_cmd->add_option("--radius", eval.radius, "PCP radius")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen_cmd) return run_gen(gen);
    if (*train_cmd) return run_train(train, train_only);
    if (*select_cmd) return run_select(select, select_only);
    if (*eval_cmd) return run_eval(eval);
  } catch (const UnreadableInput& e) {
    std::cerr << "tsda: " << e.what() << '\n';
    return kExitUnreadable;
  } catch (const std::exception& e) {
    std::cerr << "tsda: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}
