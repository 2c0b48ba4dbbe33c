// diffsg: dataset generation, training, sampling, evaluation and trace export.

#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "diffsg/baselines.hpp"
#include "diffsg/checkpoint.hpp"
#include "diffsg/data.hpp"
#include "diffsg/diffusion.hpp"
#include "diffsg/errors.hpp"
#include "diffsg/eval.hpp"
#include "diffsg/presets.hpp"

#ifndef DIFFSG_VERSION
#define DIFFSG_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using namespace diffsg;

namespace {

struct Options {
  // shared
  std::uint64_t seed = 1;
  int threads = 1;
  std::string problem = "msr3";
  std::string ranges;
  std::string out = "out";
  std::string data;
  std::string checkpoint;
  // gen-data
  int size = 0;
  int val_size = kValidationSize;
  // train / baseline
  int epochs = 0;
  int batch_size = 0;
  double lr = 0.0;
  int hidden = 0;
  int depth = 0;
  int steps = 20;
  double p_uncond = 0.1;
  // sampling
  int k = 16;
  double omega = 500.0;
  std::string sampler = "ddpm";
  std::vector<int> ddim_steps;
  double eta = 0.0;
  bool clip_x0 = true;
  // eval / sample / trace
  std::string domain = "both";
  int limit = 0;
  std::string instance;
  int index = 0;
  std::string method = "gd";
  int starts = 1;
  std::vector<int> grid;
};

ProblemConfig ranges_of(const Options& o) {
  return o.ranges.empty() ? ProblemConfig{} : load_problem_config(o.ranges);
}

// Zero-valued options fall back to the per-problem preset.
Preset preset_of(const Options& o, ProblemKind kind) {
  Preset p = preset(kind);
  if (o.hidden > 0) p.hidden = o.hidden;
  if (o.depth > 0) p.depth = o.depth;
  if (o.epochs > 0) p.epochs = o.epochs;
  if (o.batch_size > 0) p.batch_size = o.batch_size;
  if (o.lr > 0) p.lr = o.lr;
  return p;
}

fs::path out_dir(const Options& o) {
  fs::path p(o.out);
  fs::create_directories(p);
  return p;
}

void write_manifest(const CLI::App& app, const std::string& command, const Options& o) {
  const fs::path path = out_dir(o) / "manifest.ini";
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "# diffsg manifest\n# code_version=" << DIFFSG_VERSION << "\n# rerun: diffsg --config "
      << path.string() << " " << command << "\n";
  // Options are shared across subcommands, so keep only the global ones and
  // those of the command that ran; other sections would clobber them on re-read.
  // Empty values are dropped: an empty list reads back as one zero element.
  std::istringstream all(app.config_to_str(true, false));
  const std::string prefix = command + ".";
  for (std::string line; std::getline(all, line);) {
    const auto eq = line.find('=');
    const std::string key = line.substr(0, eq);
    if (eq == std::string::npos || line.substr(eq + 1) == "\"\"") continue;
    if (key.find('.') == std::string::npos || key.rfind(prefix, 0) == 0)
      out << line << '\n';
  }
}

SamplerConfig sampler_of(const Options& o) {
  SamplerConfig c;
  if (o.sampler == "ddpm") {
    c.kind = SamplerKind::DDPM;
  } else if (o.sampler == "ddim") {
    c.kind = SamplerKind::DDIM;
  } else {
    throw CLI::ValidationError("--sampler", "expected ddpm or ddim, got " + o.sampler);
  }
  c.ddim_steps = o.ddim_steps;
  c.eta = o.eta;
  c.guidance.omega = o.omega;
  c.guidance.p_uncond = o.p_uncond;
  c.clip_x0 = o.clip_x0;
  return c;
}

std::vector<Domain> domains_of(const Options& o) {
  if (o.domain == "both") return {Domain::In, Domain::Ood};
  return {parse_domain(o.domain)};
}

fs::path split_path(const Options& o, Split s) {
  if (o.data.empty()) throw std::invalid_argument("--data DIR is required");
  const fs::path dir(o.data);
  switch (s) {
    case Split::Train: return dir / "train.jsonl";
    case Split::ValidationIn: return dir / "val_in.jsonl";
    case Split::ValidationOod: return dir / "val_ood.jsonl";
  }
  return dir;
}

Dataset load_split(const Options& o, Domain d, int limit) {
  Dataset ds = load_dataset(split_path(o, d == Domain::In ? Split::ValidationIn : Split::ValidationOod).string());
  if (limit > 0 && static_cast<std::size_t>(limit) < ds.pairs.size()) ds.pairs.resize(static_cast<std::size_t>(limit));
  return ds;
}

NormStats stats_from(const Checkpoint& c) {
  NormStats s;
  const auto& j = c.config.at("stats");
  s.kind = parse_kind(j.at("kind").get<std::string>());
  const auto m = j.at("mean").get<std::vector<double>>();
  const auto sd = j.at("std").get<std::vector<double>>();
  s.mean = Eigen::Map<const Eigen::VectorXd>(m.data(), static_cast<Eigen::Index>(m.size()));
  s.std = Eigen::Map<const Eigen::VectorXd>(sd.data(), static_cast<Eigen::Index>(sd.size()));
  return s;
}

nlohmann::json stats_json(const NormStats& s) {
  return {{"kind", to_string(s.kind)},
          {"mean", std::vector<double>(s.mean.data(), s.mean.data() + s.mean.size())},
          {"std", std::vector<double>(s.std.data(), s.std.data() + s.std.size())}};
}

std::unique_ptr<Method> method_from_checkpoint(const Options& o) {
  if (o.checkpoint.empty()) throw std::invalid_argument("--checkpoint PATH is required");
  if (!fs::exists(o.checkpoint)) throw std::runtime_error(o.checkpoint + ": checkpoint not found");
  const Checkpoint c = load_checkpoint(o.checkpoint);
  if (c.type == "denoiser")
    return std::make_unique<DiffsgMethod>(denoiser_from_checkpoint(c), stats_from(c), sampler_of(o));
  if (c.type == "mtfnn") return std::make_unique<MtfnnMethod>(mlp_from_checkpoint(c), stats_from(c));
  throw std::runtime_error(o.checkpoint + ": unknown checkpoint type '" + c.type + "'");
}

Instance instance_of(const Options& o) {
  if (!o.instance.empty()) {
    std::ifstream in(o.instance);
    if (!in) throw LoadError(o.instance, 0, "cannot open instance file");
    try {
      const auto j = nlohmann::json::parse(in);
      return instance_from_json(parse_kind(j.at("kind").get<std::string>()), j.at("x"));
    } catch (const LoadError&) {
      throw;
    } catch (const std::exception& e) {
      throw LoadError(o.instance, 0, e.what());
    }
  }
  const Dataset d = load_split(o, parse_domain(o.domain == "both" ? "in" : o.domain), 0);
  if (o.index < 0 || static_cast<std::size_t>(o.index) >= d.pairs.size())
    throw std::invalid_argument("--index outside the dataset");
  return d.pairs[static_cast<std::size_t>(o.index)].x;
}

std::vector<double> vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

void write_report_files(const std::vector<EvalReport>& reports, const Options& o) {
  const fs::path dir = out_dir(o);
  std::ofstream table(dir / "report.txt"), lines(dir / "report.jsonl"), timing(dir / "timing.jsonl");
  if (!table || !lines || !timing) throw std::runtime_error("cannot write reports in " + dir.string());
  // Wall-clock figures go to timing.jsonl so the report files stay reproducible.
  std::vector<EvalReport> untimed = reports;
  for (auto& r : untimed) r.ms_per_sample = 0.0;
  table << format_report_table(untimed);
  for (const auto& r : reports) {
    nlohmann::json j = r;
    timing << nlohmann::json{{"kind", j["kind"]}, {"method", j["method"]}, {"domain", j["domain"]},
                             {"k", j["k"]}, {"ms_per_sample", r.ms_per_sample}}
                  .dump()
           << '\n';
    j.erase("ms_per_sample");
    lines << j.dump() << '\n';
  }
  std::cout << format_report_table(reports);
}

// Commands ------------------------------------------------------------------

void cmd_gen_data(const Options& o) {
  const ProblemKind kind = parse_kind(o.problem);
  const ProblemConfig ranges = ranges_of(o);
  const int size = o.size > 0 ? o.size : default_train_size(kind);
  const fs::path dir = out_dir(o);
  spdlog::info("generating {} training pairs for {}", size, to_string(kind));
  const Dataset train = generate_dataset(kind, size, Domain::In, split_seed(o.seed, Split::Train), ranges, o.threads);
  save_dataset(train, (dir / "train.jsonl").string());
  save_stats(fit_norm(train), (dir / "stats.json").string());
  for (Domain d : {Domain::In, Domain::Ood}) {
    const Split s = d == Domain::In ? Split::ValidationIn : Split::ValidationOod;
    const Dataset v = generate_dataset(kind, o.val_size, d, split_seed(o.seed, s), ranges, o.threads);
    save_dataset(v, (dir / (d == Domain::In ? "val_in.jsonl" : "val_ood.jsonl")).string());
  }
  spdlog::info("wrote datasets and stats to {}", dir.string());
}

void cmd_train(const Options& o) {
  const Dataset train = load_dataset(split_path(o, Split::Train).string());
  const NormStats stats = load_stats((fs::path(o.data) / "stats.json").string());
  if (stats.kind != train.kind) throw std::runtime_error("stats.json does not match train.jsonl");
  const ProblemKind kind = train.kind;
  const Preset pre = preset_of(o, kind);
  const DenoiserConfig dc = denoiser_config(kind, pre, o.steps);
  Rng rng(o.seed);
  DenoiserParams p = init_denoiser(dc, rng);
  TrainConfig tc;
  tc.epochs = pre.epochs;
  tc.batch_size = pre.batch_size;
  tc.adam.lr = pre.lr;
  tc.guidance.p_uncond = o.p_uncond;
  const fs::path dir = out_dir(o);
  std::ofstream log(dir / "loss.csv");
  log << "epoch,loss\n";
  spdlog::info("training {} denoiser: h={} n={} T={} params={} epochs={}", to_string(kind), dc.hidden,
               dc.depth, dc.max_step, parameter_count(p), tc.epochs);
  train_denoiser(p, condition_matrix(stats, train), solution_matrix(train), cosine_schedule(dc.max_step), tc, rng,
                 [&](int e, double l) {
                   log << e << ',' << nlohmann::json(l).dump() << '\n';
                   spdlog::debug("epoch {} loss {:.6f}", e, l);
                 });
  save_checkpoint(denoiser_checkpoint(p, {{"kind", to_string(kind)}, {"stats", stats_json(stats)}}),
                  (dir / "denoiser.json").string());
  spdlog::info("wrote {}", (dir / "denoiser.json").string());
}

void cmd_sample(const Options& o) {
  const auto method = method_from_checkpoint(o);
  const Instance x = instance_of(o);
  const auto cands = method->propose(x, o.seed, o.k);
  std::ofstream file(out_dir(o) / "samples.jsonl");
  for (const auto& y : cands) {
    const double f = objective(x, y);
    nlohmann::json j = {{"y", vec(y)}, {"objective", std::isfinite(f) ? nlohmann::json(f) : nlohmann::json()},
                        {"feasible", is_feasible(x, y)}};
    std::cout << j.dump() << '\n';
    file << j.dump() << '\n';
  }
}

void cmd_eval(const Options& o) {
  const auto method = method_from_checkpoint(o);
  std::vector<EvalReport> reports;
  for (Domain d : domains_of(o))
    reports.push_back(evaluate(*method, load_split(o, d, o.limit), o.k, o.seed, o.threads));
  write_report_files(reports, o);
}

void cmd_baseline(const Options& o) {
  std::vector<EvalReport> reports;
  if (o.method == "gd") {
    GdMethod gd(GdConfig{}, o.starts);
    for (Domain d : domains_of(o)) reports.push_back(evaluate(gd, load_split(o, d, o.limit), 1, o.seed, o.threads));
  } else if (o.method == "mtfnn") {
    const Dataset train = load_dataset(split_path(o, Split::Train).string());
    const NormStats stats = load_stats((fs::path(o.data) / "stats.json").string());
    const ProblemKind kind = train.kind;
    Rng rng(o.seed);
    const Preset pre = preset_of(o, kind);
    MlpParams p = init_mlp(mtfnn_config(kind, pre), rng);
    MlpTrainConfig tc;
    tc.epochs = pre.epochs;
    tc.batch_size = pre.batch_size;
    tc.adam.lr = pre.lr;
    const fs::path dir = out_dir(o);
    std::ofstream log(dir / "loss.csv");
    log << "epoch,loss\n";
    mlp_train(p, condition_matrix(stats, train), solution_matrix(train), tc, rng,
              [&](int e, double l) { log << e << ',' << nlohmann::json(l).dump() << '\n'; });
    save_checkpoint(mlp_checkpoint(p, {{"kind", to_string(kind)}, {"stats", stats_json(stats)}}),
                    (dir / "mtfnn.json").string());
    MtfnnMethod m(std::move(p), stats);
    for (Domain d : domains_of(o)) reports.push_back(evaluate(m, load_split(o, d, o.limit), 1, o.seed, o.threads));
  } else {
    throw CLI::ValidationError("--method", "expected gd or mtfnn, got " + o.method);
  }
  write_report_files(reports, o);
}

void cmd_trace(const Options& o) {
  const auto method = method_from_checkpoint(o);
  const auto* diffsg = dynamic_cast<const DiffsgMethod*>(method.get());
  if (!diffsg) throw std::runtime_error(o.checkpoint + ": trace export needs a denoiser checkpoint");
  const Instance x = instance_of(o);
  const GridSpec grid = o.grid.empty() ? default_grid(kind_of(x)) : GridSpec{o.grid};
  const nlohmann::json trace = export_trace(*diffsg, x, o.seed, grid);
  const fs::path path = out_dir(o) / "trace.json";
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << trace.dump() << '\n';
  spdlog::info("wrote {}", path.string());
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* level = std::getenv("DIFFSG_LOG")) spdlog::set_level(spdlog::level::from_str(level));
  spdlog::set_pattern("[%l] %v");

  Options o;
  CLI::App app{"Diffusion-based solution generator for network optimization problems"};
  app.set_version_flag("--version", DIFFSG_VERSION);
  app.set_config("--config", "", "Read options from an INI/TOML file (flags override it)");
  app.add_option("--seed", o.seed, "Base seed")->capture_default_str();
  app.add_option("--threads", o.threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--out", o.out, "Output directory")->capture_default_str();
  app.require_subcommand(1);
  app.fallthrough();

  auto add_problem = [&](CLI::App* s) {
    s->add_option("--problem", o.problem, "co | msr3 | msr80 | nu")->capture_default_str()
        ->check(CLI::IsMember({"co", "msr3", "msr80", "nu"}, CLI::ignore_case));
    s->add_option("--ranges", o.ranges, "Problem range file (JSON)");
  };
  auto add_data = [&](CLI::App* s) { s->add_option("--data", o.data, "Directory written by gen-data"); };
  auto add_training = [&](CLI::App* s) {
    s->add_option("--epochs", o.epochs, "Epochs (0 = per-problem default)")->capture_default_str();
    s->add_option("--batch-size", o.batch_size, "Minibatch size (0 = per-problem default)")->capture_default_str();
    s->add_option("--lr", o.lr, "Adam learning rate (0 = per-problem default)")->capture_default_str();
  };
  auto add_sampling = [&](CLI::App* s) {
    s->add_option("--checkpoint", o.checkpoint, "Checkpoint written by train or baseline");
    s->add_option("--k", o.k, "Samples per instance")->capture_default_str()->check(CLI::PositiveNumber);
    s->add_option("--omega", o.omega, "Guidance strength")->capture_default_str()->check(CLI::NonNegativeNumber);
    s->add_option("--sampler", o.sampler, "ddpm | ddim")->capture_default_str();
    s->add_option("--ddim-steps", o.ddim_steps, "Decreasing step subset ending at 1")->delimiter(',');
    s->add_option("--eta", o.eta, "DDIM noise scale in [0, 1]")->capture_default_str();
    s->add_option("--clip-x0", o.clip_x0, "Clamp the implied clean sample to [-1, 1] (true|false)")
        ->capture_default_str();
  };
  auto add_domain = [&](CLI::App* s) {
    s->add_option("--domain", o.domain, "in | ood | both")->capture_default_str()
        ->check(CLI::IsMember({"in", "ood", "both"}, CLI::ignore_case));
    s->add_option("--limit", o.limit, "Evaluate only the first N pairs (0 = all)")->capture_default_str();
  };
  auto add_instance = [&](CLI::App* s) {
    s->add_option("--instance", o.instance, "Instance file {\"kind\": ..., \"x\": {...}}");
    s->add_option("--index", o.index, "Pair index in the validation split when no --instance")->capture_default_str();
  };

  auto* gen = app.add_subcommand("gen-data", "Generate training and validation datasets");
  add_problem(gen);
  gen->add_option("--size", o.size, "Training pairs (0 = per-problem default)")->capture_default_str();
  gen->add_option("--val-size", o.val_size, "Validation pairs per domain")->capture_default_str()
      ->check(CLI::PositiveNumber);

  auto* train = app.add_subcommand("train", "Train the denoiser");
  add_data(train);
  add_training(train);
  train->add_option("--hidden", o.hidden, "Hidden width h (0 = per-problem default)")->capture_default_str();
  train->add_option("--depth", o.depth, "Down/up blocks n (0 = per-problem default)")->capture_default_str();
  train->add_option("--steps", o.steps, "Diffusion steps T")->capture_default_str()->check(CLI::PositiveNumber);
  train->add_option("--p-uncond", o.p_uncond, "Condition dropout probability")->capture_default_str();

  auto* smp = app.add_subcommand("sample", "Sample solutions for one instance");
  add_sampling(smp);
  add_data(smp);
  add_instance(smp);
  smp->add_option("--domain", o.domain, "Split used with --index")->capture_default_str();

  auto* ev = app.add_subcommand("eval", "Best-of-K evaluation on the validation splits");
  add_sampling(ev);
  add_data(ev);
  add_domain(ev);

  auto* base = app.add_subcommand("baseline", "Train and/or evaluate GD or MTFNN");
  add_data(base);
  add_training(base);
  add_domain(base);
  base->add_option("--method", o.method, "gd | mtfnn")->capture_default_str();
  base->add_option("--starts", o.starts, "GD starting points")->capture_default_str()->check(CLI::PositiveNumber);

  auto* tr = app.add_subcommand("trace", "Export one denoising trajectory with objective lattices");
  add_sampling(tr);
  add_data(tr);
  add_instance(tr);
  tr->add_option("--domain", o.domain, "Split used with --index")->capture_default_str();
  tr->add_option("--grid", o.grid, "Lattice resolution list")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    if (command == "gen-data") cmd_gen_data(o);
    else if (command == "train") cmd_train(o);
    else if (command == "sample") cmd_sample(o);
    else if (command == "eval") cmd_eval(o);
    else if (command == "baseline") cmd_baseline(o);
    else if (command == "trace") cmd_trace(o);
    write_manifest(app, command, o);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "diffsg " << command << ": " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "diffsg " << command << ": " << e.what() << '\n';
    return 1;
  }
  return 0;
}
