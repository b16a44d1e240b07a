#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>
#include <tbb/global_control.h>
#include <tbb/info.h>

#include <chrono>
#include <filesystem>
#include <iostream>
#include <memory>

#include "dfib/error.hpp"
#include "dfib/io.hpp"
#include "dfib/scenario.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit { Ok = 0, Failure = 1, BadConfig = 2, TaskError = 3 };

struct Options {
  std::string config;
  std::string out = "out";
  int threads = 0;
  std::optional<unsigned long long> seed;
  std::string log_level = "info";
};

int run(const std::string& command, const Options& o) {
  const auto t0 = std::chrono::steady_clock::now();
  dfib::Scenario sc;
  std::string text;
  try {
    text = dfib::io::read_text(o.config);
    sc = dfib::Scenario::load(o.config);
  } catch (const dfib::Error& e) {
    spdlog::error("{}", e.what());
    return BadConfig;
  }
  if (o.seed) sc.seed = *o.seed;
  if (command == "validate") {
    std::cout << "ok: " << o.config << " (task " << sc.task << ")\n";
    return Ok;
  }
  if (command != sc.task) {
    spdlog::error("SchemaError: subcommand '{}' does not match the scenario task '{}'", command, sc.task);
    return BadConfig;
  }

  dfib::io::Manifest m;
  m.command = command;
  m.config_path = o.config;
  m.config_hash = dfib::io::sha256_hex(text);
  m.seed = sc.seed;
  m.threads = o.threads > 0 ? o.threads : tbb::info::default_concurrency();
  int status = Ok;
  try {
    spdlog::info("{} on {} -> {}", command, o.config, o.out);
    const dfib::RunResult r = dfib::run_scenario(sc, o.out);
    m.outputs = r.outputs;
    m.summary = r.summary;
    m.status = "ok";
    spdlog::info("summary {}", r.summary.dump());
  } catch (const dfib::Error& e) {
    spdlog::error("{}", e.what());
    m.status = e.what();
    status = TaskError;
  }
  m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json j = m.to_json();
  j["versions"]["spdlog"] = fmt::format("{}.{}.{}", SPDLOG_VER_MAJOR, SPDLOG_VER_MINOR, SPDLOG_VER_PATCH);
  dfib::io::write_text(fs::path(o.out) / "manifest.json", j.dump(2) + "\n");
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Double fibration transforms: forward operators, Bolker checks, wavefront detection"};
  app.require_subcommand(1);
  Options o;
  std::string seed_text;
  auto add_common = [&](CLI::App* sub, bool outputs) {
    sub->add_option("--config", o.config, "scenario JSON")->required()->check(CLI::ExistingFile);
    if (outputs) sub->add_option("--out", o.out, "output directory");
    sub->add_option("--threads", o.threads, "worker threads (0: all cores)")->check(CLI::NonNegativeNumber);
    sub->add_option("--seed", seed_text, "RNG seed, overrides the scenario");
    sub->add_option("--log-level", o.log_level, "trace, debug, info, warn, error, off")
        ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "critical", "off"}));
  };
  for (const char* name : {"forward", "bolker", "wavefront", "phase-check", "recover"})
    add_common(app.add_subcommand(name, std::string("run a '") + name + "' scenario"), true);
  add_common(app.add_subcommand("validate", "check a scenario against the schema"), false);

  CLI11_PARSE(app, argc, argv);
  spdlog::set_default_logger(spdlog::stderr_color_mt("dfib"));
  spdlog::set_level(spdlog::level::from_str(o.log_level));
  if (!seed_text.empty()) {
    try {
      size_t used = 0;
      o.seed = std::stoull(seed_text, &used);
      if (used != seed_text.size()) throw std::invalid_argument(seed_text);
    } catch (const std::exception&) {
      spdlog::error("--seed expects an unsigned integer, got '{}'", seed_text);
      return BadConfig;
    }
  }
  std::unique_ptr<tbb::global_control> limit;
  if (o.threads > 0)
    limit = std::make_unique<tbb::global_control>(tbb::global_control::max_allowed_parallelism, o.threads);
  try {
    return run(app.get_subcommands().front()->get_name(), o);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return Failure;
  }
}
