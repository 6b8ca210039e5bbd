// epe: entropy analysis, routing statistics, training, evaluation and self-checks.

#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"

namespace {

void add_mode(CLI::App* cmd, std::string& mode, std::vector<std::string> choices) {
  cmd->add_option("--mode", mode, "Model variant")->required()->check(CLI::IsMember(std::move(choices)));
}

}  // namespace

int main(int argc, char** argv) {
  using namespace epe::cli;
  CLI::App app{"Entropy-based patch encoder toolkit"};
  app.require_subcommand(1);

  EntropyMapArgs map_args;
  auto* map_cmd = app.add_subcommand("entropy-map", "Per-patch entropy CSV and heatmap for one image");
  map_cmd->add_option("--image", map_args.image, "Input PPM")->required();
  map_cmd->add_option("--patch-size", map_args.patch_size, "Patch side n")->required();
  map_cmd->add_option("--out-csv", map_args.out_csv)->required();
  map_cmd->add_option("--out-pgm", map_args.out_pgm)->required();
  map_cmd->add_flag("--pad", map_args.pad, "Reflect-pad to a multiple of the patch size");

  RouteStatsArgs route_args;
  std::string plan_csv;
  auto* route_cmd = app.add_subcommand("route-stats", "Group sizes, entropy ranges and FLOP report");
  route_cmd->add_option("--image", route_args.image)->required();
  route_cmd->add_option("--patch-size", route_args.patch_size)->required();
  route_cmd->add_option("--plan-csv", plan_csv, "Write the per-patch group assignment");
  route_cmd->add_flag("--pad", route_args.pad);

  TrainArgs train_args;
  std::string config_path;
  std::size_t max_iter = 0;
  std::uint64_t seed = 0;
  auto* train_cmd = app.add_subcommand("train", "Train on the configured dataset");
  train_cmd->add_option("--config", config_path, "key = value config file");
  add_mode(train_cmd, train_args.mode, {"baseline", "epe"});
  train_cmd->add_option("--out-dir", train_args.out_dir)->required();
  auto* max_iter_opt = train_cmd->add_option("--max-iter", max_iter, "Overrides max_iter");
  auto* seed_opt = train_cmd->add_option("--seed", seed, "Overrides seed");
  train_cmd->add_flag("--quiet", train_args.quiet);

  EvalArgs eval_args;
  std::string eval_config, eval_csv;
  auto* eval_cmd = app.add_subcommand("eval", "Per-class IoU and mIoU of a checkpoint");
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint)->required();
  eval_cmd->add_option("--data", eval_args.data, "Directory with images/ and labels/")->required();
  add_mode(eval_cmd, eval_args.mode, {"baseline", "epe"});
  eval_cmd->add_option("--config", eval_config);
  eval_cmd->add_option("--out-csv", eval_csv);

  std::string suite = "all";
  auto* verify_cmd = app.add_subcommand("verify", "Run the oracle self-check suites");
  verify_cmd->add_option("--suite", suite)->check(CLI::IsMember({"grad", "fold", "entropy", "optimizer", "all"}));

  ParamsArgs params_args;
  std::string params_config;
  auto* params_cmd = app.add_subcommand("params", "Parameter and FLOP breakdown");
  add_mode(params_cmd, params_args.mode, {"baseline", "epe", "epe-module-only"});
  params_cmd->add_option("--config", params_config);
  params_cmd->add_option("--height", params_args.height);
  params_cmd->add_option("--width", params_args.width);

  MakeToyArgs toy_args;
  std::string toy_config;
  auto* toy_cmd = app.add_subcommand("make-toy", "Write the toy dataset as PPM/PGM files");
  toy_cmd->add_option("--out-dir", toy_args.out_dir)->required();
  toy_cmd->add_option("--config", toy_config);
  toy_cmd->add_option("--split", toy_args.split)->check(CLI::IsMember({"train", "val"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }

  auto optional_path = [](const std::string& s) { return s.empty() ? std::nullopt : std::optional<fs::path>(s); };
  try {
    if (*map_cmd) return cmd_entropy_map(map_args, std::cout);
    if (*route_cmd) {
      route_args.plan_csv = optional_path(plan_csv);
      return cmd_route_stats(route_args, std::cout);
    }
    if (*train_cmd) {
      train_args.config = optional_path(config_path);
      if (*max_iter_opt) train_args.max_iter = max_iter;
      if (*seed_opt) train_args.seed = seed;
      return cmd_train(train_args, std::cout);
    }
    if (*eval_cmd) {
      eval_args.config = optional_path(eval_config);
      eval_args.out_csv = optional_path(eval_csv);
      return cmd_eval(eval_args, std::cout);
    }
    if (*verify_cmd) return cmd_verify(suite, std::cout);
    if (*params_cmd) {
      params_args.config = optional_path(params_config);
      return cmd_params(params_args, std::cout);
    }
    if (*toy_cmd) {
      toy_args.config = optional_path(toy_config);
      return cmd_make_toy(toy_args, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
