#include <doctest.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "diffsg/checkpoint.hpp"
#include "diffsg/data.hpp"
#include "diffsg/errors.hpp"

using namespace diffsg;
namespace fs = std::filesystem;

namespace {

std::string read_all(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path temp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "diffsg_tests";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("generation is deterministic and thread-independent") {
  ProblemConfig cfg;
  const Dataset a = generate_dataset(ProblemKind::NU, 40, Domain::In, 11, cfg, 1);
  const Dataset b = generate_dataset(ProblemKind::NU, 40, Domain::In, 11, cfg, 3);
  const fs::path pa = temp_file("a.jsonl"), pb = temp_file("b.jsonl");
  save_dataset(a, pa.string());
  save_dataset(b, pb.string());
  CHECK(read_all(pa) == read_all(pb));

  const Dataset one = generate_dataset(ProblemKind::MSR3, 1, Domain::In, 3, cfg);
  REQUIRE(one.pairs.size() == 1u);
  CHECK(is_feasible(one.pairs[0].x, one.pairs[0].y));
  CHECK_THROWS_AS(generate_dataset(ProblemKind::MSR3, 0, Domain::In, 3, cfg), std::invalid_argument);
}

TEST_CASE("stored solutions beat random candidates") {
  ProblemConfig cfg;
  Rng rng(9);
  for (ProblemKind kind : {ProblemKind::CO, ProblemKind::MSR3, ProblemKind::NU}) {
    const Dataset d = generate_dataset(kind, 34, Domain::In, 21, cfg);
    for (const Pair& p : d.pairs) {
      CHECK(is_feasible(p.x, p.y));
      const double best = objective(p.x, p.y);
      REQUIRE(std::isfinite(best));
      for (int s = 0; s < 1000; ++s) {
        Eigen::VectorXd u(solution_dim(kind));
        for (Eigen::Index i = 0; i < u.size(); ++i) u(i) = rng.uniform();
        const double f = objective(p.x, project_feasible(p.x, from_unit(p.x, u)));
        INFO(to_string(kind), " stored ", best, " candidate ", f);
        CHECK(better_or_equal(kind, best * (sense(kind) == Sense::Minimize ? 1 - 1e-9 : 1 + 1e-9), f));
      }
    }
  }
}

TEST_CASE("split seeds are disjoint") {
  CHECK(split_seed(10, Split::Train) == 10u);
  CHECK(split_seed(10, Split::ValidationIn) == 11u);
  CHECK(split_seed(10, Split::ValidationOod) == 12u);
}

TEST_CASE("OOD ranges exceed IN on shifted features only") {
  ProblemConfig cfg;
  const Dataset in = generate_dataset(ProblemKind::MSR3, 3000, Domain::In, 1, cfg);
  const Dataset ood = generate_dataset(ProblemKind::MSR3, 3000, Domain::Ood, 2, cfg);
  auto max_of = [](const Dataset& d, int f) {
    double m = -1e300;
    for (const auto& p : d.pairs) m = std::max(m, condition_features(p.x)(f));
    return m;
  };
  for (int f = 0; f < 4; ++f) CHECK(max_of(ood, f) > max_of(in, f));

  const Dataset nin = generate_dataset(ProblemKind::NU, 300, Domain::In, 1, cfg);
  const Dataset nood = generate_dataset(ProblemKind::NU, 300, Domain::Ood, 2, cfg);
  CHECK(max_of(nood, 7) > max_of(nin, 7));
  CHECK(max_of(nood, 6) == max_of(nin, 6));
}

TEST_CASE("normalization") {
  ProblemConfig cfg;
  const Dataset d = generate_dataset(ProblemKind::CO, 2000, Domain::In, 5, cfg);
  const NormStats s = fit_norm(d);
  const Eigen::MatrixXd c = condition_matrix(s, d);
  for (Eigen::Index f = 0; f < c.rows(); ++f) CHECK(std::abs(c.row(f).mean()) < 0.01);
  // Bandwidth and edge CPU are constant in the default ranges.
  CHECK(s.std(9) == 1.0);
  CHECK(s.std(10) == 1.0);
  CHECK(c.row(9).cwiseAbs().maxCoeff() == 0.0);

  const Eigen::MatrixXd y = solution_matrix(d);
  CHECK(y.maxCoeff() <= 1.0);
  CHECK(y.minCoeff() >= -1.0);
  Rng rng(2);
  for (ProblemKind kind : {ProblemKind::CO, ProblemKind::MSR3, ProblemKind::NU}) {
    const Instance x = sample_instance(kind, Domain::In, cfg, rng);
    Eigen::VectorXd v(solution_dim(kind));
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.normal();
    const Eigen::VectorXd back = normalize_solution(x, denormalize_solution(x, v));
    CHECK((back - v).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("dataset and stats persistence") {
  ProblemConfig cfg;
  const Dataset d = generate_dataset(ProblemKind::NU, 100, Domain::Ood, 8, cfg);
  const fs::path p = temp_file("nu.jsonl");
  save_dataset(d, p.string());
  const Dataset back = load_dataset(p.string());
  REQUIRE(back.pairs.size() == 100u);
  CHECK(back.kind == d.kind);
  CHECK(back.domain == d.domain);
  CHECK(back.seed == d.seed);
  for (std::size_t i = 0; i < 100; ++i) {
    CHECK(back.pairs[i].y == d.pairs[i].y);
    CHECK(condition_features(back.pairs[i].x) == condition_features(d.pairs[i].x));
  }

  SUBCASE("tampered version is rejected") {
    std::string text = read_all(p);
    const auto pos = text.find("\"version\":1");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 11, "\"version\":9");
    const fs::path bad = temp_file("bad_version.jsonl");
    std::ofstream(bad, std::ios::binary) << text;
    CHECK_THROWS_AS(load_dataset(bad.string()), LoadError);
  }
  SUBCASE("malformed line reports its number") {
    std::string text = read_all(p);
    std::size_t pos = 0;
    for (int i = 0; i < 3; ++i) pos = text.find('\n', pos) + 1;
    text.insert(pos, "{not json}\n");
    const fs::path bad = temp_file("bad_line.jsonl");
    std::ofstream(bad, std::ios::binary) << text;
    try {
      load_dataset(bad.string());
      FAIL("expected a load error");
    } catch (const LoadError& e) {
      CHECK(e.line() == 4u);
    }
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(load_dataset("/nonexistent/file.jsonl"), LoadError); }

  const NormStats s = fit_norm(d);
  const fs::path sp = temp_file("stats.json");
  save_stats(s, sp.string());
  const NormStats s2 = load_stats(sp.string());
  CHECK(s2.mean == s.mean);
  CHECK(s2.std == s.std);
}

TEST_CASE("large CO file loads quickly") {
  ProblemConfig cfg;
  const Dataset d = generate_dataset(ProblemKind::CO, 50000, Domain::In, 1, cfg);
  const fs::path p = temp_file("co_large.jsonl");
  save_dataset(d, p.string());
  const auto t0 = std::chrono::steady_clock::now();
  const Dataset back = load_dataset(p.string());
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(back.pairs.size() == 50000u);
  CHECK(secs < 5.0);
}

TEST_CASE("checkpoint round trip") {
  Rng rng(3);
  DenoiserParams p = init_denoiser({5, 8, 32, 3, 20}, rng);
  p.output_head.weight.setRandom();
  const fs::path path = temp_file("ckpt.json");
  save_checkpoint(denoiser_checkpoint(p, {{"kind", "nu"}}), path.string());
  const Checkpoint c = load_checkpoint(path.string());
  CHECK(c.config.at("kind") == "nu");
  const DenoiserParams q = denoiser_from_checkpoint(c);
  std::vector<nn::Matrix> a, b;
  for_each_tensor(p, [&](const std::string&, const auto& t) { a.emplace_back(t); });
  for_each_tensor(q, [&](const std::string&, const auto& t) { b.emplace_back(t); });
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);

  std::string text = read_all(path);
  text.replace(text.find("\"version\":1"), 11, "\"version\":2");
  std::ofstream(path, std::ios::binary) << text;
  CHECK_THROWS_AS(load_checkpoint(path.string()), LoadError);
}
