/*
 * Copyright 2026 The modfeat Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Command-line front end: train, eval, gradcheck, gen-data.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "modfeat/modfeat.hpp"

namespace fs = std::filesystem;
using namespace modfeat;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

/// Applies `--key=value` / `--key value` overrides left over by CLI11.
void apply_overrides(RawConfig& raw, const std::vector<std::string>& extras) {
  for (std::size_t i = 0; i < extras.size(); ++i) {
    std::string arg = extras[i];
    if (arg.rfind("--", 0) != 0) throw ConfigError("unexpected argument '" + arg + "'");
    arg.erase(0, 2);
    std::string key, value;
    if (const auto eq = arg.find('='); eq != std::string::npos) {
      key = arg.substr(0, eq);
      value = arg.substr(eq + 1);
    } else {
      if (i + 1 >= extras.size()) throw ConfigError("override --" + arg + " needs a value");
      key = arg;
      value = extras[++i];
    }
    std::replace(key.begin(), key.end(), '-', '_');
    raw.set(key, value);
  }
}

RawConfig load_raw(const std::string& config_path, const std::vector<std::string>& extras) {
  RawConfig raw = config_path.empty() ? RawConfig() : RawConfig::from_file(config_path);
  apply_overrides(raw, extras);
  return raw;
}

void print_summary(std::ostream& out, const RunSummary& s) {
  out << std::left << std::setw(16) << "metric" << std::right << std::setw(10) << "mean" << std::setw(10) << "std"
      << std::setw(8) << "seeds" << '\n';
  auto row = [&](const char* name, const MetricStat& m) {
    out << std::left << std::setw(16) << name << std::right << std::fixed << std::setprecision(4);
    if (m.n == 0) {
      out << std::setw(10) << "-" << std::setw(10) << "-";
    } else {
      out << std::setw(10) << m.mean << std::setw(10) << m.std;
    }
    out << std::setw(8) << m.n << '\n';
  };
  row("target_acc", s.target_acc);
  row("keep_rate", s.keep_rate);
  row("pl_acc", s.pl_acc);
  row("modulator_gap", s.modulator_gap);
  out.unsetf(std::ios::floatfield);
}

fs::path seed_dir(const RunConfig& rc, std::uint64_t seed) { return fs::path(rc.output.dir) / ("seed_" + std::to_string(seed)); }

void write_result_file(const fs::path& dir, const SeedResult& r) {
  std::ofstream out(dir / "result.csv", std::ios::binary);
  write_seed_results_csv(out, {r});
}

SeedResult read_result_file(const fs::path& dir) {
  std::ifstream in(dir / "result.csv");
  std::string line;
  if (!std::getline(in, line) || !std::getline(in, line)) throw Error("missing result for " + dir.string());
  return read_seed_result_row(line);
}

/// Runs one seed in the current process. Returns false on training abort.
bool run_one(const RunConfig& rc, const DomainDataset& ds, std::uint64_t seed) {
  const fs::path dir = seed_dir(rc, seed);
  try {
    const auto start = std::chrono::steady_clock::now();
    SeedRun run = run_seed(rc, ds, seed, dir);
    write_result_file(dir, run.result);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cerr << "seed " << seed << ": target_acc=" << run.result.target_acc << " keep_rate=" << run.result.keep_rate
              << " (" << std::fixed << std::setprecision(1) << secs << "s)\n";
    std::cerr.unsetf(std::ios::floatfield);
    return true;
  } catch (const TrainingAborted& e) {
    fs::create_directories(dir);
    std::ofstream(dir / "abort.txt") << e.what() << '\n';
    std::cerr << "seed " << seed << ": " << e.what() << '\n';
    return false;
  }
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& extras, int parallel) {
  RunConfig rc;
  DomainDataset ds;
  try {
    rc = resolve(load_raw(config_path, extras));
    ds = rc.load_dataset();
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  fs::create_directories(rc.output.dir);
  {
    std::ofstream out(fs::path(rc.output.dir) / "config.resolved.ini");
    rc.raw.write(out);
  }

  bool all_ok = true;
  if (parallel <= 1) {
    for (auto seed : rc.seeds) all_ok = run_one(rc, ds, seed) && all_ok;
  } else {
    std::vector<pid_t> running;
    auto reap_one = [&]() {
      int status = 0;
      const pid_t pid = ::wait(&status);
      running.erase(std::remove(running.begin(), running.end(), pid), running.end());
      if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) all_ok = false;
    };
    for (auto seed : rc.seeds) {
      if (static_cast<int>(running.size()) >= parallel) reap_one();
      std::cout.flush();
      std::cerr.flush();
      const pid_t pid = ::fork();
      if (pid < 0) {
        std::cerr << "error: fork failed\n";
        return kExitFailure;
      }
      if (pid == 0) ::_exit(run_one(rc, ds, seed) ? 0 : 1);
      running.push_back(pid);
    }
    while (!running.empty()) reap_one();
  }
  if (!all_ok) return kExitFailure;

  std::vector<SeedResult> results;
  for (auto seed : rc.seeds) results.push_back(read_result_file(seed_dir(rc, seed)));
  const RunSummary summary = aggregate(results);
  {
    std::ofstream out(fs::path(rc.output.dir) / "seeds.csv", std::ios::binary);
    write_seed_results_csv(out, results);
  }
  {
    std::ofstream out(fs::path(rc.output.dir) / "summary.csv", std::ios::binary);
    write_summary_csv(out, summary);
  }
  std::cout << "mode " << to_string(rc.train.mode) << ", " << results.size() << " seed(s), output in " << rc.output.dir
            << '\n';
  print_summary(std::cout, summary);
  return kExitOk;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& data_path, int domain) {
  try {
    Checkpoint ck = load_checkpoint(checkpoint_path);
    DomainDataset ds = load_csv(data_path, CsvSchema{ck.model.extractor.config().input_dim});
    std::vector<Sample> test;
    for (const auto& s : ds.samples)
      if (domain < 0 || s.domain_id == domain) test.push_back(s);
    const double acc = evaluate(ck.model, &ck.bank, test, ck.mode);
    std::cout << "target_acc " << csv_number(acc) << " (" << test.size() << " samples)\n";
    return kExitOk;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}

int cmd_gradcheck(const std::string& config_path, const std::vector<std::string>& extras) {
  std::uint64_t seed = 0;
  try {
    if (!config_path.empty() || !extras.empty()) seed = resolve(load_raw(config_path, extras)).seeds.front();
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  const auto start = std::chrono::steady_clock::now();
  MiniatureProblem problem = make_miniature_problem(seed, Method::fm);
  const GradCheckReport report = check_total_loss_gradient(problem, 1e-5, 1e-4);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::cout << "gradcheck: " << report.entries.size() << " entries, max relative error " << report.max_rel_error
            << " (tolerance " << report.tolerance << ", " << secs << "s) " << (report.passed ? "PASS" : "FAIL")
            << '\n';
  return report.passed ? kExitOk : kExitFailure;
}

int cmd_gen_data(const std::string& config_path, const std::vector<std::string>& extras, const std::string& out) {
  try {
    const RunConfig rc = resolve(load_raw(config_path, extras));
    const DomainDataset ds = generate_synthetic(rc.synthetic);
    save_csv(out, ds);
    std::cout << "wrote " << ds.samples.size() << " samples (" << ds.num_classes << " classes, " << ds.num_domains
              << " domains, " << ds.input_dim << " features) to " << out << '\n';
    return kExitOk;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"modfeat: semi-supervised domain generalization with feature modulation"};
  app.require_subcommand(1);

  std::string config_path;
  int parallel = 1;
  auto* train = app.add_subcommand("train", "train one model per seed and summarise");
  train->add_option("-c,--config", config_path, "config file ([data] [model] [train] [output] sections)");
  train->add_option("--parallel-seeds", parallel, "run up to N seeds as separate processes")->check(CLI::PositiveNumber);
  train->allow_extras();

  std::string checkpoint, data;
  int domain = -1;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a CSV dataset");
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval->add_option("--data", data, "dataset CSV")->required();
  eval->add_option("--domain", domain, "only evaluate rows of this domain id");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the full training loss");
  gradcheck->add_option("-c,--config", config_path, "config file (only train.seeds is used)");
  gradcheck->allow_extras();

  std::string out_path;
  auto* gen = app.add_subcommand("gen-data", "write a synthetic multi-domain dataset as CSV");
  gen->add_option("-c,--config", config_path, "config file ([data] section is used)");
  gen->add_option("-o,--out", out_path, "output CSV path")->required();
  gen->allow_extras();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  if (!config_path.empty() && !fs::exists(config_path)) {
    std::cerr << "error: config file not found: " << config_path << '\n';
    return kExitUsage;
  }
  if (*train) return cmd_train(config_path, train->remaining(), parallel);
  if (*eval) return cmd_eval(checkpoint, data, domain);
  if (*gradcheck) return cmd_gradcheck(config_path, gradcheck->remaining());
  return cmd_gen_data(config_path, gen->remaining(), out_path);
}
