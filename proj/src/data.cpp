#include "tsda/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

namespace tsda {

void DomainDataset::validate() const {
  if (task_dim == 0) throw std::invalid_argument("dataset task dimension must be positive");
  if (feature_shape.empty()) throw std::invalid_argument("dataset feature shape is empty");
  if (labels.size() != features.size()) {
    throw std::invalid_argument("dataset has " + std::to_string(features.size()) +
                                " feature rows but " + std::to_string(labels.size()) + " labels");
  }
  if (labeled_prefix > size()) throw std::invalid_argument("labeled prefix exceeds sample count");
  for (std::size_t i = 0; i < size(); ++i) {
    if (features[i].shape() != feature_shape) {
      throw std::invalid_argument("sample " + std::to_string(i) + " has shape " +
                                  shape_to_string(features[i].shape()) + ", expected " +
                                  shape_to_string(feature_shape));
    }
    const Label& y = labels[i];
    if (i >= labeled_prefix) {
      if (is_labeled(y)) {
        throw std::invalid_argument("sample " + std::to_string(i) +
                                    " lies past the labeled prefix but carries a label");
      }
      continue;
    }
    if (task == TaskType::classification) {
      if (!std::holds_alternative<std::size_t>(y) || std::get<std::size_t>(y) >= task_dim) {
        throw std::invalid_argument("sample " + std::to_string(i) + " needs a class in [0, " +
                                    std::to_string(task_dim) + ")");
      }
    } else if (!std::holds_alternative<Tensor>(y) || std::get<Tensor>(y).shape() != Shape{task_dim}) {
      throw std::invalid_argument("sample " + std::to_string(i) + " needs a regression vector of width " +
                                  std::to_string(task_dim));
    }
  }
}

DomainDataset with_labeled_prefix(const DomainDataset& ds, std::size_t n_labeled) {
  if (n_labeled > ds.labeled_prefix) {
    throw std::invalid_argument("cannot label " + std::to_string(n_labeled) + " samples; only " +
                                std::to_string(ds.labeled_prefix) + " carry labels");
  }
  DomainDataset out = ds;
  for (std::size_t i = n_labeled; i < out.size(); ++i) out.labels[i] = std::monostate{};
  out.labeled_prefix = n_labeled;
  return out;
}

DomainDataset subset(const DomainDataset& ds, const std::vector<std::size_t>& indices) {
  DomainDataset out;
  out.task = ds.task;
  out.task_dim = ds.task_dim;
  out.feature_shape = ds.feature_shape;
  bool prefix = true;
  for (std::size_t idx : indices) {
    out.features.push_back(ds.features.at(idx));
    out.labels.push_back(ds.labels.at(idx));
    if (prefix && is_labeled(out.labels.back())) {
      ++out.labeled_prefix;
    } else {
      prefix = false;
      out.labels.back() = std::monostate{};
    }
  }
  return out;
}

std::pair<DomainDataset, DomainDataset> split_holdout(const DomainDataset& ds, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw std::invalid_argument("holdout fraction must lie in (0, 1)");
  if (ds.size() < 2) throw std::invalid_argument("need at least two samples to split a holdout");
  std::size_t n_hold = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ds.size())));
  n_hold = std::clamp<std::size_t>(n_hold, 1, ds.size() - 1);
  std::vector<std::size_t> head(ds.size() - n_hold), tail(n_hold);
  std::iota(head.begin(), head.end(), 0);
  std::iota(tail.begin(), tail.end(), ds.size() - n_hold);
  return {subset(ds, head), subset(ds, tail)};
}

// ---------------------------------------------------------------------------
// Generators

namespace {

std::vector<std::size_t> seeded_permutation(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

}  // namespace

DomainPair gen_two_moons_shift(const MoonsShift& p) {
  if (p.n_per_domain < 4) throw std::invalid_argument("two-moons needs at least 4 samples per domain");
  if (!(p.noise_sd >= 0.0)) throw std::invalid_argument("noise_sd must be nonnegative");
  if (!(p.scale > 0.0)) throw std::invalid_argument("scale must be positive");

  std::mt19937_64 rng(p.seed);
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
  std::normal_distribution<double> noise(0.0, 1.0);

  const std::size_t n = p.n_per_domain;
  const std::size_t n_outer = (n + 1) / 2;
  std::vector<Tensor> points;
  std::vector<std::size_t> classes;
  for (std::size_t i = 0; i < n; ++i) {
    const bool outer = i < n_outer;
    const double t = angle(rng);
    double x = outer ? std::cos(t) : 1.0 - std::cos(t);
    double y = outer ? std::sin(t) : 0.5 - std::sin(t);
    x += p.noise_sd * noise(rng);
    y += p.noise_sd * noise(rng);
    points.push_back(Tensor::vector({x, y}));
    classes.push_back(outer ? 0 : 1);
  }
  const auto perm = seeded_permutation(n, rng);

  const double th = p.rotation_deg * std::numbers::pi / 180.0;
  const double c = std::cos(th), s = std::sin(th);
  DomainPair out;
  for (DomainDataset* ds : {&out.source, &out.target}) {
    ds->task = TaskType::classification;
    ds->task_dim = 2;
    ds->feature_shape = {2};
    ds->labeled_prefix = n;
  }
  for (std::size_t idx : perm) {
    const Tensor& q = points[idx];
    out.source.features.push_back(q);
    out.source.labels.emplace_back(classes[idx]);
    const double x = p.scale * (c * q[0] - s * q[1]) + p.translation_x;
    const double y = p.scale * (s * q[0] + c * q[1]) + p.translation_y;
    out.target.features.push_back(Tensor::vector({x, y}));
    out.target.labels.emplace_back(classes[idx]);
  }
  return out;
}

namespace {

constexpr double kForeground = 0.8;
constexpr double kBackground = 0.1;

// Clean template image (values kForeground / kBackground) for one class.
std::vector<double> pattern_template(std::size_t cls, std::size_t grid, std::mt19937_64& rng) {
  const std::size_t len = std::max<std::size_t>(2, grid / 2);
  std::vector<double> img(grid * grid, kBackground);
  auto set = [&](std::size_t r, std::size_t c) { img[r * grid + c] = kForeground; };
  std::uniform_int_distribution<std::size_t> any(0, grid - 1);
  std::uniform_int_distribution<std::size_t> fit(0, grid - len);
  switch (cls) {
    case 0: {  // horizontal bar
      const std::size_t r = any(rng), c0 = fit(rng);
      for (std::size_t c = c0; c < c0 + len; ++c) set(r, c);
      break;
    }
    case 1: {  // vertical bar
      const std::size_t c = any(rng), r0 = fit(rng);
      for (std::size_t r = r0; r < r0 + len; ++r) set(r, c);
      break;
    }
    default: {  // square outline
      const std::size_t r0 = fit(rng), c0 = fit(rng);
      for (std::size_t k = 0; k < len; ++k) {
        set(r0, c0 + k);
        set(r0 + len - 1, c0 + k);
        set(r0 + k, c0);
        set(r0 + k, c0 + len - 1);
      }
      break;
    }
  }
  return img;
}

}  // namespace

DomainPair gen_intensity_shift_patterns(const IntensityShift& p) {
  if (p.grid < 4) throw std::invalid_argument("pattern grid must be at least 4");
  if (!(p.gain > 0.0)) throw std::invalid_argument("intensity gain must be positive");
  if (!(p.noise_sd >= 0.0)) throw std::invalid_argument("noise_sd must be nonnegative");
  if (p.n_per_domain < kPatternClasses) {
    throw std::invalid_argument("need at least one sample per pattern class");
  }

  std::mt19937_64 shape_rng(p.seed);
  std::mt19937_64 source_noise_rng(p.seed ^ 0x5eed5eed5eed0001ULL);
  std::mt19937_64 target_noise_rng(p.seed ^ 0x5eed5eed5eed0002ULL);
  std::normal_distribution<double> noise(0.0, 1.0);

  const std::size_t n = p.n_per_domain;
  const Shape shape{1, p.grid, p.grid};
  std::vector<std::vector<double>> clean;
  std::vector<std::size_t> classes;
  for (std::size_t i = 0; i < n; ++i) {
    classes.push_back(i % kPatternClasses);
    clean.push_back(pattern_template(classes.back(), p.grid, shape_rng));
  }
  const auto perm = seeded_permutation(n, shape_rng);

  DomainPair out;
  for (DomainDataset* ds : {&out.source, &out.target}) {
    ds->task = TaskType::classification;
    ds->task_dim = kPatternClasses;
    ds->feature_shape = shape;
    ds->labeled_prefix = n;
  }
  auto clamp01 = [](double v) { return std::clamp(v, 0.0, 1.0); };
  for (std::size_t idx : perm) {
    std::vector<double> src(clean[idx].size()), tgt(clean[idx].size());
    for (std::size_t k = 0; k < src.size(); ++k) {
      // Draw noise unconditionally so the sequence does not depend on noise_sd.
      const double ns = noise(source_noise_rng);
      const double nt = noise(target_noise_rng);
      src[k] = clamp01(clean[idx][k] + p.noise_sd * ns);
      tgt[k] = clamp01(p.gain * clean[idx][k] + p.offset + p.noise_sd * nt);
    }
    out.source.features.emplace_back(shape, std::move(src));
    out.source.labels.emplace_back(classes[idx]);
    out.target.features.emplace_back(shape, std::move(tgt));
    out.target.labels.emplace_back(classes[idx]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Text format

DatasetParseError::DatasetParseError(std::size_t line, const std::string& detail,
                                     const std::string& source)
    : std::runtime_error((source.empty() ? "line " : source + ":") + std::to_string(line) + ": " + detail),
      line_(line),
      detail_(detail) {}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

void append_csv(std::string& out, std::span<const double> values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += format_double(values[i]);
  }
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    parts.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

std::size_t parse_count(std::string_view s, std::size_t line, const std::string& what) {
  std::size_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw DatasetParseError(line, "invalid " + what + " '" + std::string(s) + "'");
  }
  return v;
}

std::vector<double> parse_numbers(std::string_view s, std::size_t line, const std::string& what) {
  std::vector<double> out;
  std::size_t column = 1;
  for (std::string_view cell : split(s, ',')) {
    double v = 0.0;
    const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (cell.empty() || res.ec != std::errc() || res.ptr != cell.data() + cell.size() || !std::isfinite(v)) {
      throw DatasetParseError(line, what + " value " + std::to_string(column) + " '" +
                                        std::string(cell) + "' is not a finite number");
    }
    out.push_back(v);
    ++column;
  }
  return out;
}

}  // namespace

std::string format_dataset(const DomainDataset& ds) {
  ds.validate();
  std::string out = "TSDA v1\n";
  out += "task=";
  out += ds.task == TaskType::classification ? "classification:" : "regression:";
  out += std::to_string(ds.task_dim);
  out += " shape=";
  for (std::size_t i = 0; i < ds.feature_shape.size(); ++i) {
    if (i) out += 'x';
    out += std::to_string(ds.feature_shape[i]);
  }
  out += " count=" + std::to_string(ds.size());
  out += " labeled_prefix=" + std::to_string(ds.labeled_prefix) + "\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Label& y = ds.labels[i];
    if (std::holds_alternative<std::size_t>(y)) {
      out += std::to_string(std::get<std::size_t>(y));
    } else if (std::holds_alternative<Tensor>(y)) {
      append_csv(out, std::get<Tensor>(y).data());
    } else {
      out += '?';
    }
    out += '|';
    append_csv(out, ds.features[i].data());
    out += '\n';
  }
  return out;
}

DomainDataset parse_dataset(const std::string& text) {
  std::vector<std::string_view> lines = split(text, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  for (auto& l : lines) {
    if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
  }

  if (lines.empty() || lines[0] != "TSDA v1") throw DatasetParseError(1, "expected header 'TSDA v1'");
  if (lines.size() < 2) throw DatasetParseError(2, "missing dataset description line");

  DomainDataset ds;
  std::size_t count = 0;
  bool has_task = false, has_shape = false, has_count = false, has_prefix = false;
  for (std::string_view field : split(lines[1], ' ')) {
    if (field.empty()) continue;
    const std::size_t eq = field.find('=');
    if (eq == std::string_view::npos) {
      throw DatasetParseError(2, "malformed field '" + std::string(field) + "'");
    }
    const std::string_view key = field.substr(0, eq), value = field.substr(eq + 1);
    if (key == "task") {
      const std::size_t colon = value.find(':');
      const std::string_view kind = value.substr(0, colon);
      if (colon == std::string_view::npos || (kind != "classification" && kind != "regression")) {
        throw DatasetParseError(2, "task must be classification:<k> or regression:<d>");
      }
      ds.task = kind == "classification" ? TaskType::classification : TaskType::regression;
      ds.task_dim = parse_count(value.substr(colon + 1), 2, "task dimension");
      if (ds.task_dim == 0) throw DatasetParseError(2, "task dimension must be positive");
      has_task = true;
    } else if (key == "shape") {
      for (std::string_view d : split(value, 'x')) {
        const std::size_t dim = parse_count(d, 2, "shape dimension");
        if (dim == 0) throw DatasetParseError(2, "shape dimensions must be positive");
        ds.feature_shape.push_back(dim);
      }
      has_shape = true;
    } else if (key == "count") {
      count = parse_count(value, 2, "count");
      has_count = true;
    } else if (key == "labeled_prefix") {
      ds.labeled_prefix = parse_count(value, 2, "labeled_prefix");
      has_prefix = true;
    } else {
      throw DatasetParseError(2, "unknown field '" + std::string(key) + "'");
    }
  }
  if (!has_task || !has_shape || !has_count || !has_prefix) {
    throw DatasetParseError(2, "description needs task=, shape=, count= and labeled_prefix=");
  }
  if (ds.labeled_prefix > count) throw DatasetParseError(2, "labeled_prefix exceeds count");

  const std::size_t width = shape_size(ds.feature_shape);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t line_no = i + 3;
    if (i + 2 >= lines.size()) {
      throw DatasetParseError(line_no, "expected sample " + std::to_string(i + 1) + " of " +
                                           std::to_string(count) + ", found end of file");
    }
    const std::string_view line = lines[i + 2];
    const std::size_t bar = line.find('|');
    if (bar == std::string_view::npos) throw DatasetParseError(line_no, "missing '|' separator");
    const std::string_view label = line.substr(0, bar);
    std::vector<double> values = parse_numbers(line.substr(bar + 1), line_no, "feature");
    if (values.size() != width) {
      throw DatasetParseError(line_no, "expected " + std::to_string(width) + " feature values, got " +
                                           std::to_string(values.size()));
    }
    ds.features.emplace_back(ds.feature_shape, std::move(values));

    if (i >= ds.labeled_prefix) {
      if (label != "?") throw DatasetParseError(line_no, "sample past the labeled prefix must use '?'");
      ds.labels.emplace_back(std::monostate{});
    } else if (label == "?") {
      throw DatasetParseError(line_no, "sample inside the labeled prefix is unlabeled");
    } else if (ds.task == TaskType::classification) {
      const std::size_t cls = parse_count(label, line_no, "class label");
      if (cls >= ds.task_dim) {
        throw DatasetParseError(line_no, "class " + std::to_string(cls) + " out of range for " +
                                             std::to_string(ds.task_dim) + " classes");
      }
      ds.labels.emplace_back(cls);
    } else {
      std::vector<double> target = parse_numbers(label, line_no, "target");
      if (target.size() != ds.task_dim) {
        throw DatasetParseError(line_no, "expected " + std::to_string(ds.task_dim) +
                                             " target values, got " + std::to_string(target.size()));
      }
      ds.labels.emplace_back(Tensor({ds.task_dim}, std::move(target)));
    }
  }
  if (lines.size() > count + 2) {
    throw DatasetParseError(count + 3, "unexpected data after " + std::to_string(count) + " samples");
  }
  return ds;
}

void write_dataset(const DomainDataset& ds, const std::filesystem::path& path) {
  const std::string text = format_dataset(ds);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

DomainDataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return parse_dataset(text);
  } catch (const DatasetParseError& e) {
    throw DatasetParseError(e.line(), e.detail(), path.string());
  }
}

}  // namespace tsda
