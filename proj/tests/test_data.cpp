#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "support/oracles.hpp"
#include "tsda/data.hpp"

using namespace tsda;

namespace {

std::size_t count_class(const DomainDataset& ds, std::size_t k) {
  return static_cast<std::size_t>(std::count_if(ds.labels.begin(), ds.labels.end(), [&](const Label& y) {
    return std::holds_alternative<std::size_t>(y) && std::get<std::size_t>(y) == k;
  }));
}

double mean_pixel(const DomainDataset& ds) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& x : ds.features) {
    for (double v : x.data()) s += v;
    n += x.size();
  }
  return s / static_cast<double>(n);
}

bool features_bit_equal(const DomainDataset& a, const DomainDataset& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!bit_equal(a.features[i], b.features[i])) return false;
  }
  return true;
}

DomainDataset regression_set() {
  DomainDataset ds;
  ds.task = TaskType::regression;
  ds.task_dim = 2;
  ds.feature_shape = {1, 2, 2};
  oracle::Rng rng(3);
  for (int i = 0; i < 5; ++i) {
    ds.features.push_back(oracle::random_tensor({1, 2, 2}, rng, -1e6, 1e6));
    ds.labels.push_back(i < 3 ? Label{oracle::random_tensor({2}, rng)} : Label{});
  }
  ds.labeled_prefix = 3;
  return ds;
}

}  // namespace

TEST_CASE("two moons: identity shift reproduces the source") {
  const auto d = gen_two_moons_shift({200, 0.1, 0, 0, 0, 1, 7});
  CHECK(features_bit_equal(d.source, d.target));
  CHECK(d.source.labels == d.target.labels);
}

TEST_CASE("two moons: balanced, labeled, seeded") {
  const auto d = gen_two_moons_shift({400, 0.1, 30, 1, 0, 1, 3});
  CHECK(count_class(d.source, 0) == 200);
  CHECK(count_class(d.source, 1) == 200);
  CHECK(d.source.fully_labeled());
  CHECK(d.target.fully_labeled());
  CHECK(d.source.feature_shape == Shape{2});
  const auto again = gen_two_moons_shift({400, 0.1, 30, 1, 0, 1, 3});
  CHECK(features_bit_equal(d.target, again.target));
  CHECK_FALSE(features_bit_equal(d.target, gen_two_moons_shift({400, 0.1, 30, 1, 0, 1, 4}).target));

  const auto odd = gen_two_moons_shift({9, 0.1, 0, 0, 0, 1, 0});
  CHECK(count_class(odd.source, 0) == 5);
  CHECK(count_class(odd.source, 1) == 4);
}

TEST_CASE("two moons: target is the affine image of the same draw") {
  const auto d = gen_two_moons_shift({50, 0.1, 90, 1, -2, 2, 5});
  for (std::size_t i = 0; i < d.source.size(); ++i) {
    const double x = d.source.features[i][0], y = d.source.features[i][1];
    CHECK(d.target.features[i][0] == doctest::Approx(-2 * y + 1).epsilon(1e-12));
    CHECK(d.target.features[i][1] == doctest::Approx(2 * x - 2).epsilon(1e-12));
  }
}

TEST_CASE("two moons: parameter validation") {
  CHECK_THROWS(gen_two_moons_shift({3, 0.1, 0, 0, 0, 1, 0}));
  CHECK_THROWS(gen_two_moons_shift({10, -0.1, 0, 0, 0, 1, 0}));
}

TEST_CASE("intensity patterns: zero shift gives the same law") {
  const auto d = gen_intensity_shift_patterns({300, 8, 1.0, 0.0, 0.0, 2});
  CHECK(features_bit_equal(d.source, d.target));
  CHECK(d.source.feature_shape == Shape{1, 8, 8});
  for (std::size_t k = 0; k < kPatternClasses; ++k) CHECK(count_class(d.source, k) == 100);
}

TEST_CASE("intensity patterns: gain and offset brighten the target") {
  const auto d = gen_intensity_shift_patterns({300, 8, 1.5, 0.2, 0.05, 2});
  CHECK(mean_pixel(d.target) > mean_pixel(d.source));
}

TEST_CASE("intensity patterns: pixels are clamped") {
  oracle::Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const IntensityShift p{30, oracle::uniform_int(rng, 4, 10), oracle::uniform(rng, 0.1, 5),
                           oracle::uniform(rng, -2, 2), oracle::uniform(rng, 0, 1), rng()};
    const auto d = gen_intensity_shift_patterns(p);
    for (const auto* ds : {&d.source, &d.target}) {
      for (const auto& x : ds->features) {
        for (double v : x.data()) {
          CHECK(v >= 0.0);
          CHECK(v <= 1.0);
        }
      }
    }
  }
  CHECK_THROWS(gen_intensity_shift_patterns({30, 3, 1, 0, 0, 0}));
  CHECK_THROWS(gen_intensity_shift_patterns({30, 8, 0, 0, 0, 0}));
}

TEST_CASE("labeled prefix helpers") {
  const auto d = gen_two_moons_shift({20, 0.1, 0, 0, 0, 1, 0});
  const auto t = with_labeled_prefix(d.target, 5);
  CHECK(t.labeled_prefix == 5);
  CHECK(is_labeled(t.labels[4]));
  CHECK_FALSE(is_labeled(t.labels[5]));
  CHECK_NOTHROW(t.validate());
  CHECK_THROWS(with_labeled_prefix(d.target, 21));

  const auto [train, hold] = split_holdout(t, 0.2);
  CHECK(train.size() == 16);
  CHECK(hold.size() == 4);
  CHECK(train.labeled_prefix == 5);
  CHECK(hold.labeled_prefix == 0);
  CHECK(bit_equal(hold.features[0], t.features[16]));

  const auto sub = subset(t, {6, 0, 1});
  CHECK(sub.labeled_prefix == 0);
  CHECK(subset(t, {0, 1, 6}).labeled_prefix == 2);
}

TEST_CASE("dataset text round trip is bit exact") {
  const auto d = gen_two_moons_shift({64, 0.3, 17, 0.1, -0.2, 1.3, 11});
  const auto t = with_labeled_prefix(d.target, 10);
  const auto back = parse_dataset(format_dataset(t));
  CHECK(back == t);
  CHECK(features_bit_equal(back, t));

  const auto r = regression_set();
  CHECK(parse_dataset(format_dataset(r)) == r);

  DomainDataset tricky = r;
  tricky.features[0][0] = -0.0;
  tricky.features[0][1] = 5e-324;
  tricky.features[0][2] = 1.7976931348623157e308;
  tricky.features[0][3] = 0.1;
  const auto tb = parse_dataset(format_dataset(tricky));
  CHECK(features_bit_equal(tb, tricky));
}

TEST_CASE("dataset files") {
  const auto dir = std::filesystem::temp_directory_path();
  const auto path = dir / "tsda_data_test.tsda";
  auto t = with_labeled_prefix(gen_two_moons_shift({30, 0.1, 0, 0, 0, 1, 1}).target, 0);
  write_dataset(t, path);
  const auto back = read_dataset(path);
  CHECK(back == t);
  CHECK(back.labeled_prefix == 0);
  std::filesystem::remove(path);
  CHECK_THROWS(read_dataset(dir / "does_not_exist.tsda"));
}

TEST_CASE("format is human readable") {
  DomainDataset ds;
  ds.task = TaskType::classification;
  ds.task_dim = 3;
  ds.feature_shape = {2};
  ds.features = {Tensor::vector({0.5, -1}), Tensor::vector({2, 0.25})};
  ds.labels = {std::size_t{2}, Label{}};
  ds.labeled_prefix = 1;
  CHECK(format_dataset(ds) == "TSDA v1\ntask=classification:3 shape=2 count=2 labeled_prefix=1\n2|0.5,-1\n?|2,0.25\n");
}

TEST_CASE("parse errors name the line") {
  const std::string header = "TSDA v1\ntask=classification:2 shape=2 count=10 labeled_prefix=0\n";
  std::string body;
  for (int i = 0; i < 9; ++i) body += "?|0,1\n";
  try {
    parse_dataset(header + body);
    FAIL("expected a parse error");
  } catch (const DatasetParseError& e) {
    CHECK(e.line() == 12);
    CHECK(std::string(e.what()).find("line 12") != std::string::npos);
  }

  auto line_of = [](const std::string& text) -> std::size_t {
    try {
      parse_dataset(text);
    } catch (const DatasetParseError& e) {
      return e.line();
    }
    return 0;
  };
  CHECK(line_of("TSDA v2\n") == 1);
  CHECK(line_of("TSDA v1\ntask=classification:2 shape=2 count=1\n?|0,1\n") == 2);
  CHECK(line_of("TSDA v1\ntask=classification:2 shape=2 count=1 labeled_prefix=0\n?|0,x\n") == 3);
  CHECK(line_of("TSDA v1\ntask=classification:2 shape=2 count=1 labeled_prefix=0\n?|0\n") == 3);
  CHECK(line_of("TSDA v1\ntask=classification:2 shape=2 count=1 labeled_prefix=0\n?|0,nan\n") == 3);
  CHECK(line_of("TSDA v1\ntask=classification:2 shape=2 count=1 labeled_prefix=1\n?|0,1\n") == 3);
  CHECK(line_of("TSDA v1\ntask=classification:2 shape=2 count=1 labeled_prefix=0\n1|0,1\n") == 3);
  CHECK(line_of("TSDA v1\ntask=classification:2 shape=2 count=1 labeled_prefix=1\n2|0,1\n") == 3);
  CHECK(line_of("TSDA v1\ntask=classification:2 shape=2 count=1 labeled_prefix=0\n?|0,1\n?|0,1\n") == 4);
  CHECK(line_of("TSDA v1\ntask=regression:2 shape=1 count=1 labeled_prefix=1\n0.5|3\n") == 3);
}
