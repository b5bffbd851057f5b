// Copyright 2026 The cubemanip Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// cubemanip: train, evaluate, ablate and inspect the cube manipulation stack.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cubemanip/commands.hpp"

namespace {

using cubemanip::CommandError;

int exit_code(const std::string& code) {
  if (code == "E_ARG") return 2;
  if (code == "E_CONFIG") return 3;
  if (code == "E_IO") return 4;
  if (code == "E_FORMAT") return 5;
  if (code == "E_SHAPE") return 6;
  if (code == "E_TRAIN") return 7;
  return 1;
}

std::optional<std::filesystem::path> opt_path(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::filesystem::path(s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Three-finger cube manipulation: contact planning with SAC over a model-based controller"};
  app.require_subcommand(1);

  std::string config, out_dir, checkpoint, eval_set, trace, goal_file, output, qp_file;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> seeds;
  int episodes = 0, count = 20;

  auto* train = app.add_subcommand("train", "train a contact-planning policy");
  train->add_option("--config", config, "configuration file")->required();
  train->add_option("--out", out_dir, "output directory")->required();
  train->add_option("--seed", seed, "run seed");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a fixed eval set");
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval->add_option("--eval-set", eval_set, "list file of goal trajectories")->required();
  eval->add_option("--episodes", episodes, "limit on trajectories (0 = all)");
  eval->add_option("--seed", seed, "seed for initial cube poses");
  eval->add_option("--config", config, "environment configuration (defaults to the checkpoint's)");

  auto* ablate = app.add_subcommand("ablate", "compare TP, TP+CP and TP+CP+DR across seeds");
  ablate->add_option("--config", config, "configuration file")->required();
  ablate->add_option("--seeds", seeds, "run seeds")->required();
  ablate->add_option("--eval-set", eval_set, "list file of goal trajectories")->required();
  ablate->add_option("--out", output, "CSV output path (default stdout)");

  auto* rollout = app.add_subcommand("rollout", "roll out one episode and write a per-step trace");
  rollout->add_option("--checkpoint", checkpoint, "checkpoint file (default face-center baseline)");
  rollout->add_option("--seed", seed, "episode seed");
  rollout->add_option("--trace", trace, "trace output path")->required();
  rollout->add_option("--config", config, "environment configuration");
  rollout->add_option("--goals", goal_file, "goal trajectory file");

  auto* schema = app.add_subcommand("schema", "print every configuration key with its default");

  auto* goals = app.add_subcommand("goals", "sample goal trajectories and an eval-set list file");
  goals->add_option("--out", out_dir, "output directory")->required();
  goals->add_option("--seed", seed, "sampling seed");
  goals->add_option("--count", count, "number of trajectories");
  goals->add_option("--config", config, "configuration file");

  auto* qp = app.add_subcommand("qp", "solve one contact-force QP instance");
  qp->add_option("file", qp_file, "instance file ('-' for stdin)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: E_ARG: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*train) {
      const auto out = cubemanip::cmd_train(config, out_dir, seed, &std::cerr);
      std::cout << "checkpoint " << out.checkpoint.string() << '\n' << "metrics " << out.metrics.string() << '\n';
    } else if (*eval) {
      std::cout << cubemanip::cmd_eval(checkpoint, eval_set, episodes, seed, opt_path(config)).text;
    } else if (*ablate) {
      const auto res = cubemanip::cmd_ablate(config, seeds, eval_set, &std::cerr);
      if (output.empty()) {
        std::cout << res.csv;
      } else {
        cubemanip::cmd_detail::write_or_throw(output, res.csv);
      }
    } else if (*rollout) {
      const auto res = cubemanip::cmd_rollout(opt_path(checkpoint), seed, trace, opt_path(config), opt_path(goal_file));
      std::cout << "return " << cubemanip::config_detail::fmt(res.episode_return) << '\n' << "steps " << res.sim_steps << '\n';
    } else if (*schema) {
      std::cout << cubemanip::cmd_schema();
    } else if (*goals) {
      std::cout << cubemanip::cmd_goals(opt_path(config), seed, count, out_dir).string() << '\n';
    } else if (*qp) {
      if (qp_file == "-") {
        std::cout << cubemanip::cmd_qp(std::cin, "<stdin>");
      } else {
        std::ifstream in(qp_file);
        if (!in) throw CommandError("E_IO", "cannot open '" + qp_file + "'");
        std::cout << cubemanip::cmd_qp(in, qp_file);
      }
    }
  } catch (const CommandError& e) {
    std::cerr << "error: " << e.code() << ": " << e.what() << '\n';
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: E_INTERNAL: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
