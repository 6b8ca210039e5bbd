#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

#include "epe/tensor.hpp"
#include "epe/verify.hpp"

namespace epe::cli {

namespace fs = std::filesystem;

/// Extends a 1 x C x H x W image to the next multiple of `n` on the bottom and
/// right by mirroring about the last row/column (edge pixel not repeated).
Tensor<float> reflect_pad(const Tensor<float>& image, std::size_t n);

struct EntropyMapArgs {
  fs::path image;
  std::size_t patch_size = 32;
  fs::path out_csv;
  fs::path out_pgm;
  bool pad = false;
};
int cmd_entropy_map(const EntropyMapArgs& args, std::ostream& out);

struct RouteStatsArgs {
  fs::path image;
  std::size_t patch_size = 32;
  std::optional<fs::path> plan_csv;
  bool pad = false;
};
int cmd_route_stats(const RouteStatsArgs& args, std::ostream& out);

struct TrainArgs {
  std::optional<fs::path> config;
  std::string mode = "baseline";
  fs::path out_dir;
  std::optional<std::size_t> max_iter;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};
int cmd_train(const TrainArgs& args, std::ostream& out);

struct EvalArgs {
  fs::path checkpoint;
  fs::path data;
  std::string mode = "baseline";
  std::optional<fs::path> config;
  std::optional<fs::path> out_csv;
};
int cmd_eval(const EvalArgs& args, std::ostream& out);

int cmd_verify(const std::string& suite, std::ostream& out, const verify::VerifyOptions& options = {});

struct ParamsArgs {
  std::string mode = "epe";
  std::optional<fs::path> config;
  std::size_t height = 128;
  std::size_t width = 128;
};
int cmd_params(const ParamsArgs& args, std::ostream& out);

struct MakeToyArgs {
  fs::path out_dir;
  std::optional<fs::path> config;
  std::string split = "val";
};
int cmd_make_toy(const MakeToyArgs& args, std::ostream& out);

}  // namespace epe::cli
