#include "doctest.h"

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "support/oracles.hpp"
#include "tsda/data.hpp"

namespace fs = std::filesystem;

namespace {

const std::string kCli = TSDA_CLI_PATH;
const std::string kMlp = "dense:8,relu,dense:8,relu,dense:2";

struct Run {
  int code;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class Workspace {
 public:
  Workspace() {
    static int counter = 0;
    dir_ = fs::temp_directory_path() / ("tsda_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(dir_);
  }
  ~Workspace() { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  Run run(const std::string& args, const std::string& env = "") const {
    const std::string cmd = "cd '" + dir_.string() + "' && " + env + " '" + kCli + "' " + args + " > stdout.txt 2> stderr.txt";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(dir_ / "stdout.txt"), slurp(dir_ / "stderr.txt")};
  }

  void gen_moons(double rot, int seed = 2, int n = 60) const {
    const auto r = run("gen --kind moons --n " + std::to_string(n) + " --rot " + std::to_string(rot) +
                       " --shift 1,0 --seed " + std::to_string(seed) + " --out-src s.tsda --out-tgt t.tsda");
    REQUIRE(r.code == 0);
  }

 private:
  fs::path dir_;
};

std::map<std::string, double> read_metrics(const std::string& text) {
  std::map<std::string, double> m;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    m[line.substr(0, comma)] = std::stod(line.substr(comma + 1));
  }
  return m;
}

}  // namespace

TEST_CASE("gen writes readable datasets and a manifest") {
  Workspace ws;
  const auto r = ws.run("gen --kind moons --n 40 --rot 30 --shift 1,0 --seed 4 --out-src s.tsda --out-tgt t.tsda");
  REQUIRE(r.code == 0);
  CHECK(r.out.find("\"kind\": \"moons\"") != std::string::npos);
  const auto s = tsda::read_dataset(ws.path("s.tsda"));
  const auto t = tsda::read_dataset(ws.path("t.tsda"));
  CHECK(s.size() == 40);
  CHECK(t.size() == 40);
  CHECK(s.fully_labeled());

  REQUIRE(ws.run("gen --kind moons --n 40 --seed 4 --out-src a.tsda --out-tgt b.tsda").code == 0);
  CHECK(slurp(ws.path("a.tsda")) == slurp(ws.path("b.tsda")));

  REQUIRE(ws.run("gen --kind patterns --n 30 --grid 6 --gain 1.5 --offset 0.2 --out-src p.tsda --out-tgt q.tsda").code == 0);
  CHECK(tsda::read_dataset(ws.path("p.tsda")).feature_shape == tsda::Shape{1, 6, 6});

  CHECK(ws.run("gen --kind moons --out-tgt b.tsda").code != 0);
  CHECK(ws.run("gen --kind spirals --out-src a --out-tgt b").code != 0);
}

TEST_CASE("train on a five-layer pattern") {
  Workspace ws;
  ws.gen_moons(30);
  const auto r = ws.run("train --src s.tsda --tgt t.tsda --arch dense:8,relu,dense:8,relu,dense:8,relu,dense:8,relu,"
                        "dense:2 --pattern ++--- --ckpt m.ckpt --report r.csv --epochs-pretrain 2 --epochs-joint 2 "
                        "--target-labeled 5 --form l2");
  REQUIRE(r.code == 0);
  CHECK(r.out.find("\"pattern\": \"++---\"") != std::string::npos);
  const auto report = slurp(ws.path("r.csv"));
  CHECK(report.rfind("phase,epoch,L_s,L_t,L_w,L_MMD,total,src_acc,tgt_acc\n", 0) == 0);
  CHECK(std::count(report.begin(), report.end(), '\n') == 5);
  CHECK(fs::exists(ws.path("m.ckpt")));

  // Pattern length must match the architecture.
  CHECK(ws.run("train --src s.tsda --tgt t.tsda --arch " + kMlp + " --pattern ++-- --ckpt m2 --report r2").code == 1);
}

TEST_CASE("train with no target supervision and no regularizers") {
  Workspace ws;
  ws.gen_moons(30);
  const auto r = ws.run("train --src s.tsda --tgt t.tsda --arch " + kMlp +
                        " --pattern +-- --lambda-u 0 --lambda-w 0 --target-labeled 0 --ckpt m.ckpt --report r.csv "
                        "--epochs-pretrain 2 --epochs-joint 2");
  REQUIRE(r.code == 0);
  std::istringstream in(slurp(ws.path("r.csv")));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) CHECK(line.find(",,") != std::string::npos);  // L_t is absent
}

TEST_CASE("unreadable inputs exit 2 and name the path") {
  Workspace ws;
  ws.gen_moons(0);
  const auto r = ws.run("train --src missing.tsda --tgt t.tsda --arch " + kMlp + " --pattern --- --ckpt m --report r");
  CHECK(r.code == 2);
  CHECK(r.err.find("missing.tsda") != std::string::npos);
  const auto e = ws.run("eval --ckpt nothing.ckpt --data t.tsda");
  CHECK(e.code == 2);
  CHECK(e.err.find("nothing.ckpt") != std::string::npos);
}

TEST_CASE("select reports every candidate") {
  Workspace ws;
  ws.gen_moons(30);
  const std::string args = "select --src s.tsda --tgt t.tsda --arch dense:8,relu,dense:8,relu,dense:8,relu,dense:8,"
                           "relu,dense:2 --epochs-pretrain 2 --epochs-joint 2 --target-labeled 5 --form l2 --report ";
  const auto r = ws.run(args + "a.csv");
  REQUIRE(r.code == 0);
  const auto csv = slurp(ws.path("a.csv"));
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 17);
  CHECK(csv.rfind("rank,pattern,mmd2,val_acc\n", 0) == 0);
  const std::string top = csv.substr(csv.find("\n1,") + 3, 5);
  CHECK(r.out.find("\"selected\": \"" + top + "\"") != std::string::npos);

  REQUIRE(ws.run(args + "b.csv --workers 4").code == 0);
  CHECK(slurp(ws.path("b.csv")) == csv);
}

TEST_CASE("select on unshifted data picks the all-shared pattern") {
  Workspace ws;
  REQUIRE(ws.run("gen --kind moons --n 80 --seed 3 --out-src s.tsda --out-tgt t.tsda").code == 0);
  const auto r = ws.run("select --src s.tsda --tgt t.tsda --arch " + kMlp +
                        " --val t.tsda --epochs-pretrain 4 --epochs-joint 4 --target-labeled 10 --form l2 --report sel.csv");
  REQUIRE(r.code == 0);
  CHECK(r.out.find("\"selected\": \"---\"") != std::string::npos);
  CHECK(slurp(ws.path("sel.csv")).find("\n1,---,") != std::string::npos);
}

TEST_CASE("eval of a well-fit model and its pr curve") {
  Workspace ws;
  tsda::DomainDataset blobs;
  blobs.task = tsda::TaskType::classification;
  blobs.task_dim = 2;
  blobs.feature_shape = {2};
  oracle::Rng rng(1);
  for (int i = 0; i < 40; ++i) {
    const double c = i % 2 == 0 ? -3.0 : 3.0;
    blobs.features.push_back(tsda::Tensor::vector({c + oracle::uniform(rng, -0.5, 0.5), c + oracle::uniform(rng, -0.5, 0.5)}));
    blobs.labels.push_back(static_cast<std::size_t>(i % 2));
  }
  blobs.labeled_prefix = 40;
  tsda::write_dataset(blobs, ws.path("blobs.tsda"));

  REQUIRE(ws.run("train --src blobs.tsda --tgt blobs.tsda --arch " + kMlp +
                 " --pattern --- --epochs-pretrain 40 --epochs-joint 0 --ckpt m.ckpt --report r.csv").code == 0);
  REQUIRE(ws.run("eval --ckpt m.ckpt --data blobs.tsda --stream source --metrics-out met.csv --pr-out pr.csv").code == 0);
  const auto m = read_metrics(slurp(ws.path("met.csv")));
  CHECK(m.at("samples") == 40);
  CHECK(m.at("accuracy") == 1.0);
  CHECK(m.at("average_precision") == 1.0);

  // Recompute AP from the written curve with an independent trapezoid sum.
  ws.gen_moons(30);
  REQUIRE(ws.run("train --src s.tsda --tgt t.tsda --arch " + kMlp +
                 " --pattern --- --epochs-pretrain 3 --epochs-joint 0 --ckpt w.ckpt --report w.csv").code == 0);
  REQUIRE(ws.run("eval --ckpt w.ckpt --data t.tsda --metrics-out wm.csv --pr-out wpr.csv").code == 0);
  std::istringstream pr(slurp(ws.path("wpr.csv")));
  std::string line;
  std::getline(pr, line);
  CHECK(line == "threshold,precision,recall");
  double prev_r = 0.0, prev_p = -1.0, area = 0.0;
  while (std::getline(pr, line)) {
    double t, p, r;
    char c1, c2;
    std::istringstream row(line);
    row >> t >> c1 >> p >> c2 >> r;
    if (r <= 0.0) continue;
    if (prev_p < 0.0) prev_p = p;
    area += (r - prev_r) * (p + prev_p) / 2.0;
    prev_r = r;
    prev_p = p;
  }
  CHECK(std::abs(area - read_metrics(slurp(ws.path("wm.csv"))).at("average_precision")) <= 1e-9);

  CHECK(ws.run("eval --ckpt w.ckpt --data t.tsda --pcp").code == 1);
}

TEST_CASE("reruns are byte identical and the seed comes from the environment") {
  Workspace ws;
  ws.gen_moons(30);
  const std::string base = "train --src s.tsda --tgt t.tsda --arch " + kMlp +
                           " --pattern +-- --epochs-pretrain 2 --epochs-joint 3 --target-labeled 5 ";
  REQUIRE(ws.run(base + "--ckpt a.ckpt --report a.csv").code == 0);
  REQUIRE(ws.run(base + "--ckpt b.ckpt --report b.csv").code == 0);
  CHECK(slurp(ws.path("a.ckpt")) == slurp(ws.path("b.ckpt")));
  CHECK(slurp(ws.path("a.csv")) == slurp(ws.path("b.csv")));

  REQUIRE(ws.run(base + "--ckpt c.ckpt --report c.csv", "TSDA_SEED=9").code == 0);
  REQUIRE(ws.run(base + "--ckpt d.ckpt --report d.csv --seed 9").code == 0);
  REQUIRE(ws.run(base + "--ckpt e.ckpt --report e.csv --seed 0", "TSDA_SEED=9").code == 0);
  CHECK(slurp(ws.path("c.csv")) == slurp(ws.path("d.csv")));
  CHECK(slurp(ws.path("c.csv")) != slurp(ws.path("a.csv")));
  CHECK(slurp(ws.path("e.csv")) == slurp(ws.path("a.csv")));
}
