// mhl: batch experiment runner. Reads a JSON config, writes summary.json and
// the CSV tables into the output directory and echoes the summary to stdout.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "mhl/mhl.h"

namespace fs = std::filesystem;

namespace {

bool write_file(const fs::path& p, const char* data, std::size_t n) {
  std::ofstream out(p, std::ios::binary);
  out.write(data, static_cast<std::streamsize>(n));
  return static_cast<bool>(out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Martingale Hardy-space experiments"};
  std::string command, config_path, out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> jobs;
  app.add_option("command", command, "identities | constants | decompose | probe | gradcheck");
  app.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "RNG seed (overrides the config)");
  app.add_option("--out", out_dir, "output directory (overrides the config)");
  app.add_option("--jobs", jobs, "worker threads; falls back to MHL_JOBS")
      ->check(CLI::PositiveNumber);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (!jobs) {
    if (const char* env = std::getenv("MHL_JOBS")) {
      char* end = nullptr;
      const unsigned long v = std::strtoul(env, &end, 10);
      if (*env == '\0' || *end != '\0' || v == 0 || v > 4096) {
        std::cerr << "mhl: MHL_JOBS must be a positive integer, got '" << env << "'\n";
        return 2;
      }
      jobs = static_cast<unsigned>(v);
    }
  }

  std::string config_text;
  std::string base_dir = ".";
  if (!config_path.empty()) {
    std::ifstream in(config_path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    config_text = ss.str();
    base_dir = fs::absolute(config_path).parent_path().string();
  }

  mhl_run_options opts{};
  opts.command = command.empty() ? nullptr : command.c_str();
  opts.has_seed = seed.has_value();
  opts.seed = seed.value_or(0);
  opts.jobs = jobs.value_or(0);
  opts.out_dir = out_dir.empty() ? nullptr : out_dir.c_str();
  opts.base_dir = base_dir.c_str();

  mhl_experiment* exp = nullptr;
  if (mhl_experiment_run(config_text.c_str(), &opts, &exp) != MHL_OK) {
    std::cerr << "mhl: " << mhl_last_error() << "\n";
    return 2;
  }
  const int rc = mhl_experiment_exit_code(exp);
  const std::string summary = mhl_experiment_summary(exp);
  const fs::path dir = mhl_experiment_out_dir(exp);

  std::error_code ec;
  fs::create_directories(dir, ec);
  bool ok = !ec;
  ok = ok && write_file(dir / "summary.json", summary.data(), summary.size());
  for (std::size_t k = 0; ok && k < mhl_experiment_file_count(exp); ++k) {
    const char* name = nullptr;
    const char* content = nullptr;
    std::size_t len = 0;
    mhl_experiment_file(exp, k, &name, &content, &len);
    ok = write_file(dir / name, content, len);
  }
  mhl_experiment_free(exp);
  if (!ok) {
    std::cerr << "mhl: cannot write results to " << dir << "\n";
    return 2;
  }

  std::cout << summary;
  if (rc == 2 || rc == 3) std::cerr << "mhl: run did not complete cleanly, see " << (dir / "summary.json") << "\n";
  return rc;
}
