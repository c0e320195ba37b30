#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>

#include "support/oracles.hpp"
#include "tsda/metrics.hpp"

using namespace tsda;

namespace {

struct Ranking {
  std::vector<double> scores;
  std::unique_ptr<bool[]> truths;
  std::size_t n = 0;

  explicit Ranking(std::vector<double> s, const std::vector<int>& t) : scores(std::move(s)), n(t.size()) {
    truths = std::make_unique<bool[]>(n);
    for (std::size_t i = 0; i < n; ++i) truths[i] = t[i] != 0;
  }
  std::span<const bool> labels() const { return {truths.get(), n}; }
  PRCurve curve() const { return pr_curve(scores, labels()); }
};

// Precision at recall r on the anchored curve: linear interpolation between
// neighbouring points, flat before the first point.
double precision_at(const PRCurve& c, double r) {
  std::vector<std::pair<double, double>> pts;
  for (const auto& p : c.points) {
    if (p.recall > 0.0) pts.emplace_back(p.recall, p.precision);
  }
  if (r <= pts.front().first) return pts.front().second;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    if (r <= pts[i].first) {
      const auto [r0, p0] = pts[i - 1];
      const auto [r1, p1] = pts[i];
      if (r1 == r0) return p1;
      return p0 + (p1 - p0) * (r - r0) / (r1 - r0);
    }
  }
  return pts.back().second;
}

double riemann_ap(const PRCurve& c, int samples) {
  double s = 0.0;
  for (int i = 0; i < samples; ++i) s += precision_at(c, (i + 0.5) / samples);
  return s / samples;
}

}  // namespace

TEST_CASE("accuracy examples") {
  const std::vector<std::size_t> t{0, 1, 2, 1};
  CHECK(accuracy(t, t) == 1.0);
  CHECK(accuracy(std::vector<std::size_t>{0, 1, 2, 0}, t) == 0.75);
  CHECK_THROWS(accuracy(std::vector<std::size_t>{0}, t));
  CHECK_THROWS(accuracy(std::vector<std::size_t>{}, std::vector<std::size_t>{}));
}

TEST_CASE("accuracy of random guesses is about 1/k") {
  oracle::Rng rng(5);
  for (std::size_t k : {2u, 3u, 5u}) {
    std::vector<std::size_t> p(20000), t(20000);
    for (auto& v : p) v = oracle::uniform_int(rng, 0, k - 1);
    for (auto& v : t) v = oracle::uniform_int(rng, 0, k - 1);
    CHECK(accuracy(p, t) == doctest::Approx(1.0 / static_cast<double>(k)).epsilon(0.05));
  }
}

TEST_CASE("pr curve examples") {
  const Ranking perfect({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0});
  const auto c = perfect.curve();
  CHECK(c.points.size() == 4);
  CHECK(c.points[1].recall == 1.0);
  CHECK(c.points[1].precision == 1.0);
  CHECK(average_precision(c) == 1.0);

  const Ranking last({0.9, 0.8, 0.7, 0.1}, {0, 0, 0, 1});
  const auto cl = last.curve();
  CHECK(cl.points.back().recall == 1.0);
  CHECK(cl.points.back().precision == 0.25);
  CHECK(average_precision(cl) == 0.25);

  const Ranking inverted({0.1, 0.2, 0.8, 0.9}, {1, 1, 0, 0});
  CHECK(average_precision(inverted.curve()) < 1.0);

  const Ranking none({0.1, 0.2}, {0, 0});
  CHECK_THROWS(none.curve());
  CHECK_THROWS(pr_curve(std::vector<double>{0.1}, perfect.labels()));
}

TEST_CASE("ties share one threshold") {
  const Ranking r({0.5, 0.5, 0.5, 0.2}, {1, 0, 1, 0});
  const auto c = r.curve();
  REQUIRE(c.points.size() == 2);
  CHECK(c.points[0].threshold == 0.5);
  CHECK(c.points[0].recall == 1.0);
  CHECK(c.points[0].precision == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("pr curve properties on random rankings") {
  oracle::Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = oracle::uniform_int(rng, 2, 40);
    std::vector<double> s(n);
    std::vector<int> t(n);
    for (auto& v : s) v = std::round(oracle::uniform(rng, 0, 20)) / 4.0;  // plenty of ties
    for (auto& v : t) v = oracle::uniform(rng, 0, 1) < 0.4;
    t[oracle::uniform_int(rng, 0, n - 1)] = 1;
    const Ranking r(s, t);
    const auto c = r.curve();

    std::vector<double> distinct = s;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    CHECK(c.points.size() == distinct.size());
    for (std::size_t i = 0; i < c.points.size(); ++i) {
      CHECK(c.points[i].precision >= 0.0);
      CHECK(c.points[i].precision <= 1.0);
      CHECK(c.points[i].recall <= 1.0);
      if (i > 0) CHECK(c.points[i].recall >= c.points[i - 1].recall);
      if (i > 0) CHECK(c.points[i].threshold < c.points[i - 1].threshold);
    }
    const double ap = average_precision(c);
    CHECK(ap >= 0.0);
    CHECK(ap <= 1.0);
    CHECK(std::abs(ap - riemann_ap(c, 100000)) <= 1e-3);

    // Ranking-only dependence under a strictly increasing transform.
    std::vector<double> warped(n);
    for (std::size_t i = 0; i < n; ++i) warped[i] = std::exp(3.0 * s[i]) - 7.0;
    const Ranking rw(warped, t);
    CHECK(average_precision(rw.curve()) == ap);
  }
}

TEST_CASE("pr csv") {
  const Ranking r({0.9, 0.1}, {1, 0});
  std::ostringstream out;
  write_pr_csv(r.curve(), out);
  CHECK(out.str() == "threshold,precision,recall\n0.9,1,1\n0.1,0.5,1\n");
}

TEST_CASE("pcp boundary cases") {
  const std::vector<LandmarkSet> truth{{{0, 0}, {10, 10}}, {{5, 5}, {1, 1}}};
  CHECK(pcp_score(truth, truth).per_landmark == std::vector<double>{1.0, 1.0});
  CHECK(pcp_score(truth, truth).mean == 1.0);

  // Displacements of exactly the radius along exact directions.
  std::vector<LandmarkSet> on_edge = truth, beyond = truth;
  for (auto& set : on_edge) {
    set[0][0] += 2.0;
    set[1][1] -= 2.0;
  }
  for (auto& set : beyond) {
    set[0][0] += 2.0 + 1e-9;
    set[1][1] -= 2.0 + 1e-9;
  }
  CHECK(pcp_score(on_edge, truth, 2.0).mean == 1.0);
  CHECK(pcp_score(beyond, truth, 2.0).mean == 0.0);

  std::vector<LandmarkSet> mixed = truth;
  mixed[0][1][0] += 3.0;
  const auto m = pcp_score(mixed, truth);
  CHECK(m.per_landmark == std::vector<double>{1.0, 0.5});
  CHECK(m.mean == 0.75);

  CHECK_THROWS(pcp_score(truth, std::vector<LandmarkSet>{truth[0]}));
  CHECK_THROWS(pcp_score(truth, truth, 0.0));
}
