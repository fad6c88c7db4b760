// metasci <command> --config <file> [--seed N] [--threads N] [--deterministic]
//
// Exit codes: 0 ok, 1 user error (bad config, missing inputs), 2 numeric failure.

#include <iostream>

#include <CLI11.hpp>

#include "metasci/pipelines.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kUserError = 1;
constexpr int kNumericFailure = 2;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Snapshot compressive imaging with meta-learned modulation"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  bool deterministic = false;
  bool quiet = false;

  for (const std::string& name : metasci::pipeline_names()) {
    CLI::App* sub = app.add_subcommand(name, "run the " + name + " pipeline");
    sub->add_option("--config", config_path, "run configuration file")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "override [run] seed");
    sub->add_option("--threads", threads, "override [run] threads")->check(CLI::PositiveNumber);
    sub->add_flag("--deterministic", deterministic, "single thread, zero timing fields");
    sub->add_flag("-q,--quiet", quiet, "suppress progress lines");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUserError;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  const CLI::App* sub = app.get_subcommands().front();
  metasci::RunOptions opts;
  if (sub->count("--seed")) opts.seed = seed;
  if (sub->count("--threads")) opts.threads = threads;
  opts.deterministic = deterministic;
  opts.progress = quiet ? nullptr : &std::cerr;

  try {
    const metasci::Config cfg = metasci::Config::load(config_path);
    const metasci::Report report = metasci::run_benchmark(command, cfg, opts);
    std::cout << report.to_text();
    return kOk;
  } catch (const metasci::NumericFailure& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumericFailure;
  } catch (const metasci::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUserError;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUserError;
  }
}
