// tools/ksd_main.cpp

// Copyright 2026  The ksd authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "ksd/errors.hpp"
#include "ksd/harness.hpp"
#include "ksd/selfcheck.hpp"

// Command-line front end.  Exit codes: 0 success, 1 configuration or file
// format problem, 2 numerical failure.

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitNumerical = 2;

void print_usage(std::FILE *out) {
  std::fprintf(out,
               "usage: ksd <command> [args]\n"
               "\n"
               "commands:\n"
               "  run <config-path>\n"
               "      Run the experiment described by a key=value config file\n"
               "      and print a summary (plus a CSV log when csv_path is set).\n"
               "  gen-curves <out-dir> --samples N --seed S [--resolution R]\n"
               "      Write a synthetic curves dataset as an IDX image/label\n"
               "      pair (resolution defaults to 28).\n"
               "  selftest\n"
               "      Check the core numerics against independently computed\n"
               "      references and report one line per check.\n");
}

// Strict integer parse; the whole token must be consumed.
bool parse_long(const std::string &text, long long *out) {
  try {
    size_t pos = 0;
    *out = std::stoll(text, &pos);
    return pos == text.size();
  } catch (const std::exception &) {
    return false;
  }
}

int cmd_run(const std::vector<std::string> &args) {
  if (args.size() != 1) {
    std::fprintf(stderr, "run: expected exactly one config path\n");
    return kExitConfig;
  }
  const ksd::ExperimentConfig config = ksd::parse_config(args[0]);
  const ksd::ExperimentResult result = ksd::run_experiment(config);
  const ksd::Summary &s = result.summary;
  std::printf("iterations        %d%s\n", s.iterations,
              s.stopped_early ? "  (stopped early)" : "");
  std::printf("train objective   %.9g\n", s.final_train_obj);
  std::printf("best valid obj    %.9g\n", s.best_valid_obj);
  if (s.best_valid_err_pct == s.best_valid_err_pct)  // NaN when unlabeled
    std::printf("best valid error  %.4g%%\n", s.best_valid_err_pct);
  std::printf("wall seconds      %.3f\n", s.total_seconds);
  if (!config.csv_path.empty())
    std::printf("convergence log   %s\n", config.csv_path.c_str());
  return kExitOk;
}

int cmd_gen_curves(const std::vector<std::string> &args) {
  if (args.empty()) {
    std::fprintf(stderr, "gen-curves: missing output directory\n");
    return kExitConfig;
  }
  const std::string out_dir = args[0];
  long long samples = -1, seed = -1, resolution = 28;
  for (size_t i = 1; i < args.size(); i += 2) {
    if (i + 1 >= args.size()) {
      std::fprintf(stderr, "gen-curves: option %s needs a value\n",
                   args[i].c_str());
      return kExitConfig;
    }
    long long *slot = nullptr;
    if (args[i] == "--samples") slot = &samples;
    else if (args[i] == "--seed") slot = &seed;
    else if (args[i] == "--resolution") slot = &resolution;
    if (slot == nullptr) {
      std::fprintf(stderr, "gen-curves: unknown option %s\n", args[i].c_str());
      return kExitConfig;
    }
    if (!parse_long(args[i + 1], slot)) {
      std::fprintf(stderr, "gen-curves: %s wants an integer, got '%s'\n",
                   args[i].c_str(), args[i + 1].c_str());
      return kExitConfig;
    }
  }
  if (samples < 1 || seed < 0) {
    std::fprintf(stderr,
                 "gen-curves: --samples (positive) and --seed (non-negative) "
                 "are required\n");
    return kExitConfig;
  }
  if (resolution < 2) {
    std::fprintf(stderr, "gen-curves: resolution must be at least 2\n");
    return kExitConfig;
  }
  const std::string images = ksd::write_curves_idx(
      out_dir, static_cast<int>(samples), static_cast<int>(resolution),
      static_cast<std::uint64_t>(seed));
  const std::string labels = out_dir + "/curves_labels.idx";
  std::printf("wrote %s\n", images.c_str());
  std::printf("wrote %s\n", labels.c_str());
  return kExitOk;
}

int cmd_selftest() {
  const std::vector<ksd::CheckResult> checks = ksd::run_oracle_checks();
  int failed = 0;
  for (const ksd::CheckResult &check : checks) {
    std::printf("%s  %s: %s\n", check.passed ? "ok  " : "FAIL",
                check.name.c_str(), check.detail.c_str());
    if (!check.passed) ++failed;
  }
  if (failed > 0) {
    std::fprintf(stderr, "%d of %zu checks failed\n", failed, checks.size());
    return kExitNumerical;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char **argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  if (args.empty() || args[0] == "--help" || args[0] == "-h") {
    print_usage(args.empty() ? stderr : stdout);
    return args.empty() ? kExitConfig : kExitOk;
  }
  const std::string command = args[0];
  const std::vector<std::string> rest(args.begin() + 1, args.end());
  try {
    if (command == "run") return cmd_run(rest);
    if (command == "gen-curves") return cmd_gen_curves(rest);
    if (command == "selftest") return cmd_selftest();
    std::fprintf(stderr, "unknown command '%s'\n", command.c_str());
    print_usage(stderr);
    return kExitConfig;
  } catch (const ksd::ConfigError &e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const ksd::FormatError &e) {
    std::fprintf(stderr, "format error: %s\n", e.what());
    return kExitConfig;
  } catch (const ksd::Error &e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return kExitNumerical;
  } catch (const std::exception &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumerical;
  }
}
