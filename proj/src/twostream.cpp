#include "tsda/twostream.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>
#include <stdexcept>

namespace tsda {

std::string to_string(SharingMode mode) {
  switch (mode) {
    case SharingMode::shared: return "shared";
    case SharingMode::coupled: return "coupled";
    case SharingMode::independent: return "independent";
  }
  return "unknown";
}

std::string pattern_string(const std::vector<SharingMode>& modes) {
  std::string s;
  for (auto m : modes) s += m == SharingMode::coupled ? '+' : m == SharingMode::shared ? '-' : 'x';
  return s;
}

std::vector<SharingMode> parse_pattern(const std::string& pattern) {
  if (pattern.empty()) throw std::invalid_argument("empty sharing pattern");
  std::vector<SharingMode> modes;
  for (char c : pattern) {
    switch (c) {
      case '+': modes.push_back(SharingMode::coupled); break;
      case '-': modes.push_back(SharingMode::shared); break;
      case 'x': modes.push_back(SharingMode::independent); break;
      default:
        throw std::invalid_argument("invalid pattern character '" + std::string(1, c) +
                                    "' in \"" + pattern + "\" (expected '+', '-' or 'x')");
    }
  }
  return modes;
}

StreamPair StreamPair::build(std::vector<LayerSpec> specs, std::vector<SharingMode> modes,
                             std::uint64_t seed) {
  StreamPair pair;
  pair.specs_ = std::move(specs);
  for (std::size_t i = 0; i < pair.specs_.size(); ++i) {
    if (pair.specs_[i].has_params()) pair.param_layers_.push_back(i);
  }
  if (pair.param_layers_.empty()) {
    throw std::invalid_argument("two-stream network needs at least one parameterized layer");
  }
  if (modes.size() != pair.param_layers_.size()) {
    throw std::invalid_argument("got " + std::to_string(modes.size()) + " sharing modes for " +
                                std::to_string(pair.param_layers_.size()) +
                                " parameterized layers");
  }
  if (modes.back() != SharingMode::shared) {
    throw std::invalid_argument("the head layer must be shared between streams");
  }
  pair.modes_ = std::move(modes);

  std::mt19937_64 rng(seed);
  pair.source_.resize(pair.specs_.size());
  pair.target_.resize(pair.specs_.size());
  for (std::size_t k = 0; k < pair.param_layers_.size(); ++k) {
    const std::size_t layer = pair.param_layers_[k];
    pair.source_[layer] = init_params(pair.specs_[layer], rng);
    if (pair.modes_[k] != SharingMode::shared) pair.target_[layer] = pair.source_[layer];
    if (pair.modes_[k] == SharingMode::coupled) pair.couplings_[layer] = CouplingParams{};
  }
  return pair;
}

std::optional<SharingMode> StreamPair::mode_of_layer(std::size_t layer) const {
  for (std::size_t k = 0; k < param_layers_.size(); ++k) {
    if (param_layers_[k] == layer) return modes_[k];
  }
  return std::nullopt;
}

bool StreamPair::is_shared(std::size_t layer) const {
  const auto m = mode_of_layer(layer);
  return !m || *m == SharingMode::shared;
}

std::vector<std::size_t> StreamPair::coupled_layers() const {
  std::vector<std::size_t> out;
  for (const auto& [layer, c] : couplings_) out.push_back(layer);
  return out;
}

const LayerParams& StreamPair::target_params(std::size_t layer) const {
  return is_shared(layer) ? source_.at(layer) : target_.at(layer);
}

LayerParams& StreamPair::target_params(std::size_t layer) {
  return is_shared(layer) ? source_.at(layer) : target_.at(layer);
}

std::vector<const LayerParams*> StreamPair::source_view() const { return make_view(source_); }

std::vector<const LayerParams*> StreamPair::target_view() const {
  std::vector<const LayerParams*> view;
  view.reserve(specs_.size());
  for (std::size_t i = 0; i < specs_.size(); ++i) view.push_back(&target_params(i));
  return view;
}

CouplingParams& StreamPair::coupling(std::size_t layer) {
  auto it = couplings_.find(layer);
  if (it == couplings_.end()) {
    throw std::out_of_range("layer " + std::to_string(layer) + " is not coupled");
  }
  return it->second;
}

void StreamPair::init_target_from_source() {
  for (std::size_t layer : param_layers_) {
    if (!is_shared(layer)) target_[layer] = source_[layer];
  }
  for (auto& [layer, c] : couplings_) c = CouplingParams{};
}

NetworkPass StreamPair::pass_source(const Tensor& x) const {
  const auto view = source_view();
  return network_forward(specs_, ParamView(view), x);
}

NetworkPass StreamPair::pass_target(const Tensor& x) const {
  const auto view = target_view();
  return network_forward(specs_, ParamView(view), x);
}

double StreamPair::coupling_sum(CouplingForm form) const {
  double sum = 0.0;
  for (const auto& [layer, c] : couplings_) {
    const double q = coupling_argument(c.a, c.b, flatten_params(source_[layer]),
                                       flatten_params(target_[layer]));
    sum += form == CouplingForm::l2 ? q : std::expm1(q);
  }
  return sum;
}

Shape StreamPair::output_shape(const Shape& input) const {
  return network_output_shape(specs_, input);
}

Tensor flatten_params(const LayerParams& p) {
  std::vector<double> flat;
  flat.reserve(p.size());
  flat.insert(flat.end(), p.weights.data().begin(), p.weights.data().end());
  flat.insert(flat.end(), p.biases.data().begin(), p.biases.data().end());
  if (flat.empty()) return {};
  const std::size_t n = flat.size();
  return Tensor({n}, std::move(flat));
}

LayerParams unflatten_params(const Tensor& flat, const LayerParams& like) {
  if (flat.size() != like.size()) {
    throw DimensionError("cannot split " + std::to_string(flat.size()) +
                         " values into a block of " + std::to_string(like.size()));
  }
  LayerParams out = like;
  const std::size_t nw = like.weights.size();
  for (std::size_t i = 0; i < nw; ++i) out.weights[i] = flat[i];
  for (std::size_t i = 0; i < like.biases.size(); ++i) out.biases[i] = flat[nw + i];
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoint encoding

namespace {

constexpr char kMagic[10] = {'T', 'S', 'D', 'A', '-', 'C', 'K', 'P', 'T', '\0'};

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void block(const LayerParams& p) {
    u64(p.size());
    for (double v : p.weights.data()) f64(v);
    for (double v : p.biases.data()) f64(v);
  }
  void raw(const char* data, std::size_t n) { buf_.append(data, n); }
  std::string take() { return std::move(buf_); }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
  std::uint32_t u32() {
    const char* p = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    const char* p = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  void block(LayerParams& p) {
    const std::uint64_t n = u64();
    if (n != p.size()) {
      throw CheckpointError("checkpoint: parameter block at byte " + std::to_string(pos_ - 8) +
                            " holds " + std::to_string(n) + " values, layer expects " +
                            std::to_string(p.size()));
    }
    for (double& v : p.weights.data()) v = f64();
    for (double& v : p.biases.data()) v = f64();
  }
  const char* take(std::size_t n) {
    if (pos_ + n > bytes_.size()) {
      throw CheckpointError("checkpoint truncated at byte " + std::to_string(pos_));
    }
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const StreamPair& pair) {
  Writer w;
  w.raw(kMagic, sizeof(kMagic));
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(pair.specs().size()));
  for (const auto& s : pair.specs()) {
    w.u8(static_cast<std::uint8_t>(s.kind));
    w.u64(s.in);
    w.u64(s.out);
    w.u64(s.kernel_h);
    w.u64(s.kernel_w);
  }
  w.u32(static_cast<std::uint32_t>(pair.modes().size()));
  for (auto m : pair.modes()) w.u8(static_cast<std::uint8_t>(m));
  for (std::size_t k = 0; k < pair.parameterized_layers().size(); ++k) {
    const std::size_t layer = pair.parameterized_layers()[k];
    w.block(pair.source_params(layer));
    if (pair.modes()[k] != SharingMode::shared) w.block(pair.target_params(layer));
  }
  w.u32(static_cast<std::uint32_t>(pair.couplings().size()));
  for (const auto& [layer, c] : pair.couplings()) {
    w.u32(static_cast<std::uint32_t>(layer));
    w.f64(c.a);
    w.f64(c.b);
  }
  return w.take();
}

StreamPair decode_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("not a checkpoint: bad magic");
  }
  r.take(sizeof(kMagic));
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t n_layers = r.u32();
  std::vector<LayerSpec> specs;
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    const std::uint8_t kind = r.u8();
    if (kind > static_cast<std::uint8_t>(LayerKind::flatten)) {
      throw CheckpointError("checkpoint: unknown layer kind " + std::to_string(kind));
    }
    LayerSpec s;
    s.kind = static_cast<LayerKind>(kind);
    s.in = r.u64();
    s.out = r.u64();
    s.kernel_h = r.u64();
    s.kernel_w = r.u64();
    specs.push_back(s);
  }
  const std::uint32_t n_modes = r.u32();
  std::vector<SharingMode> modes;
  for (std::uint32_t i = 0; i < n_modes; ++i) {
    const std::uint8_t m = r.u8();
    if (m > static_cast<std::uint8_t>(SharingMode::independent)) {
      throw CheckpointError("checkpoint: unknown sharing mode " + std::to_string(m));
    }
    modes.push_back(static_cast<SharingMode>(m));
  }

  StreamPair pair;
  try {
    pair = StreamPair::build(std::move(specs), std::move(modes), 0);
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("checkpoint: invalid network: ") + e.what());
  }
  for (std::size_t k = 0; k < pair.param_layers_.size(); ++k) {
    const std::size_t layer = pair.param_layers_[k];
    r.block(pair.source_[layer]);
    if (pair.modes_[k] != SharingMode::shared) r.block(pair.target_[layer]);
  }
  const std::uint32_t n_couplings = r.u32();
  if (n_couplings != pair.couplings_.size()) {
    throw CheckpointError("checkpoint: " + std::to_string(n_couplings) + " couplings for " +
                          std::to_string(pair.couplings_.size()) + " coupled layers");
  }
  for (std::uint32_t i = 0; i < n_couplings; ++i) {
    const std::uint32_t layer = r.u32();
    auto it = pair.couplings_.find(layer);
    if (it == pair.couplings_.end()) {
      throw CheckpointError("checkpoint: coupling for non-coupled layer " + std::to_string(layer));
    }
    it->second.a = r.f64();
    it->second.b = r.f64();
  }
  if (!r.at_end()) throw CheckpointError("checkpoint: trailing bytes");
  return pair;
}

void save_checkpoint(const StreamPair& pair, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  const std::string bytes = encode_checkpoint(pair);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

StreamPair load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace tsda
