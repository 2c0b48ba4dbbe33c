#include <doctest.h>

#include <nlohmann/json.hpp>

#include <array>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "diffsg/problems.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(DIFFSG_CLI) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  std::array<char, 4096> buf{};
  while (std::size_t n = std::fread(buf.data(), 1, buf.size(), pipe)) out.append(buf.data(), n);
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string workdir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "diffsg_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

}  // namespace

TEST_CASE("argument errors exit with 2") {
  CHECK(run("").code == 2);
  CHECK(run("train --bogus 1").code == 2);
  CHECK(run("gen-data --problem tsp").code == 2);
  CHECK(run("sample --k 0").code == 2);
  const Run help = run("--help");
  CHECK(help.code == 0);
  CHECK(help.out.find("gen-data") != std::string::npos);
}

TEST_CASE("missing checkpoint names the path") {
  const std::string dir = workdir("missing");
  const Run r = run("--out " + dir + " eval --checkpoint " + dir + "/nope.json --data " + dir);
  CHECK(r.code == 1);
  CHECK(r.out.find(dir + "/nope.json: checkpoint not found") != std::string::npos);
}

TEST_CASE("gen-data, train, sample") {
  const std::string dir = workdir("pipeline");
  REQUIRE(run("--out " + dir + " gen-data --problem msr3 --size 200 --val-size 20").code == 0);
  for (const char* f : {"train.jsonl", "stats.json", "val_in.jsonl", "val_ood.jsonl", "manifest.ini"})
    CHECK(fs::exists(fs::path(dir) / f));

  REQUIRE(run("--out " + dir + " train --data " + dir + " --epochs 2 --hidden 16 --depth 2").code == 0);
  CHECK(fs::exists(fs::path(dir) / "denoiser.json"));

  const Run s = run("--out " + dir + " sample --checkpoint " + dir + "/denoiser.json --data " + dir +
                    " --index 3 --k 4 --seed 5");
  REQUIRE(s.code == 0);
  std::istringstream lines(s.out);
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    if (line.empty() || line.front() != '{') continue;
    const auto j = nlohmann::json::parse(line);
    CHECK(j.at("feasible").get<bool>());
    ++n;
  }
  CHECK(n == 4);

  const Run again = run("--out " + dir + " sample --checkpoint " + dir + "/denoiser.json --data " + dir +
                        " --index 3 --k 4 --seed 5");
  CHECK(again.out == s.out);

  const Run bad = run("--out " + dir + " sample --checkpoint " + dir + "/denoiser.json --data " + dir +
                      " --index 3 --sampler ddim --ddim-steps 20,5,7,1");
  CHECK(bad.code == 1);
}
