#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "epe/checkpoint.hpp"
#include "epe/config.hpp"
#include "epe/dataset.hpp"
#include "epe/entropy.hpp"
#include "epe/epe_module.hpp"
#include "epe/error.hpp"
#include "epe/image_io.hpp"
#include "epe/segnet.hpp"
#include "epe/trainer.hpp"

namespace epe::cli {
namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write '" + path.string() + "'");
  return f;
}

Tensor<float> load_image(const fs::path& path, std::size_t n, bool pad) {
  if (n == 0) throw ValueError("patch size must be at least 1");
  Tensor<float> image = read_ppm(path);
  if (pad) return reflect_pad(image, n);
  if (image.dim(2) % n != 0 || image.dim(3) % n != 0) {
    throw ShapeError(std::to_string(image.dim(2)) + "x" + std::to_string(image.dim(3)) +
                     " image is not divisible by patch size " + std::to_string(n) + "; rerun with --pad");
  }
  return image;
}

std::size_t mirror(std::size_t i, std::size_t extent) {
  if (extent == 1) return 0;
  const std::size_t period = 2 * (extent - 1);
  const std::size_t r = i % period;
  return r < extent ? r : period - r;
}

RunConfig run_config(const std::optional<fs::path>& path) { return path ? load_run_config(*path) : RunConfig{}; }

std::vector<SegSample> training_samples(const RunConfig& config) {
  if (config.train_images && config.train_labels) {
    auto ingest = ingest_folder(*config.train_images, *config.train_labels);
    return std::move(ingest.samples);
  }
  return generate_toy_dataset(config.toy_train);
}

std::optional<std::vector<SegSample>> validation_samples(const RunConfig& config) {
  if (config.val_images && config.val_labels) return ingest_folder(*config.val_images, *config.val_labels).samples;
  if (config.train_images) return std::nullopt;
  return generate_toy_dataset(config.toy_val);
}

void write_iou_csv(const ConfusionMatrix& cm, std::ostream& out) {
  out << "class_id,iou\n";
  const auto iou = class_iou(cm);
  for (std::size_t k = 0; k < iou.size(); ++k) {
    out << k << ',' << (iou[k] ? fmt("%.9g", *iou[k]) : std::string("nan")) << '\n';
  }
  out << "miou," << fmt("%.9g", miou(cm)) << '\n';
}

void print_count(std::ostream& out, const std::string& label, std::size_t count) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "  %-28s %10zu\n", label.c_str(), count);
  out << buf;
}

}  // namespace

Tensor<float> reflect_pad(const Tensor<float>& image, std::size_t n) {
  require_rank4(image, "pad input");
  if (n == 0) throw ValueError("patch size must be at least 1");
  const std::size_t batch = image.dim(0), channels = image.dim(1), h = image.dim(2), w = image.dim(3);
  const std::size_t ph = (h + n - 1) / n * n, pw = (w + n - 1) / n * n;
  Tensor<float> out({batch, channels, ph, pw});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t y = 0; y < ph; ++y)
        for (std::size_t x = 0; x < pw; ++x) out.at(b, c, y, x) = image.at(b, c, mirror(y, h), mirror(x, w));
  return out;
}

int cmd_entropy_map(const EntropyMapArgs& args, std::ostream& out) {
  const Tensor<float> image = load_image(args.image, args.patch_size, args.pad);
  const EntropyMap map = compute_entropy_map(image, args.patch_size);

  std::ofstream csv = open_out(args.out_csv);
  csv << "patch_index,row,col,entropy\n";
  for (std::size_t p = 0; p < map.size(); ++p) {
    csv << p << ',' << p / map.grid_w << ',' << p % map.grid_w << ',' << fmt("%.17g", map.values[p]) << '\n';
  }

  // One pixel per patch, min-max rescaled; a uniform map is all black.
  const auto [lo, hi] = std::minmax_element(map.values.begin(), map.values.end());
  std::vector<std::uint8_t> pixels(map.size(), 0);
  if (*hi > *lo) {
    for (std::size_t p = 0; p < map.size(); ++p) {
      pixels[p] = static_cast<std::uint8_t>(std::lround(255.0 * (map.values[p] - *lo) / (*hi - *lo)));
    }
  }
  write_gray_pgm(map.grid_h, map.grid_w, pixels, args.out_pgm);
  out << "patches " << map.size() << " (" << map.grid_h << "x" << map.grid_w << ")\n";
  return 0;
}

int cmd_route_stats(const RouteStatsArgs& args, std::ostream& out) {
  const std::size_t n = args.patch_size;
  const Tensor<float> image = load_image(args.image, n, args.pad);
  const EntropyMap map = compute_entropy_map(image, n);
  const RoutingPlan plan = partition_patches(map);

  out << "patches " << map.size() << '\n';
  const char* names[3] = {"high", "mid", "low"};
  for (std::size_t k = 0; k < 3; ++k) {
    const auto& group = plan.groups[k];
    out << "group " << names[k] << " size " << group.size();
    if (!group.empty()) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo, total = 0.0;
      for (auto p : group) {
        lo = std::min(lo, map.values[p]);
        hi = std::max(hi, map.values[p]);
        total += map.values[p];
      }
      out << " entropy min " << fmt("%.6f", lo) << " mean " << fmt("%.6f", total / group.size()) << " max "
          << fmt("%.6f", hi);
    }
    out << '\n';
  }

  ParamRegistry<float> registry;
  EpeConfig config;
  config.patch_size = n;
  const EpeModule<float> module(registry, config);
  const EpeCostReport cost = module.cost_report(registry, image.dim(2), image.dim(3));
  out << "flops_per_patch " << cost.flops_per_patch[0] << ' ' << cost.flops_per_patch[1] << ' '
      << cost.flops_per_patch[2] << '\n';
  out << "flops_routed " << cost.flops_routed << '\n';
  out << "flops_uniform_large " << cost.flops_uniform_large << '\n';
  out << "flop_ratio " << fmt("%.6f", cost.flop_ratio()) << '\n';

  if (args.plan_csv) {
    std::ofstream csv = open_out(*args.plan_csv);
    csv << "patch_index,group\n";
    const auto assignment = plan.assignment();
    for (std::size_t p = 0; p < assignment.size(); ++p) csv << p << ',' << names[assignment[p]] << '\n';
  }
  return 0;
}

int cmd_train(const TrainArgs& args, std::ostream& out) {
  RunConfig config = run_config(args.config);
  if (args.max_iter) config.train.max_iter = *args.max_iter;
  if (args.seed) config.train.seed = *args.seed;
  validate(config.train);
  const ModelKind kind = parse_model_kind(args.mode);

  const std::vector<SegSample> train = training_samples(config);
  SegModel<float> model(config.model(kind));
  init_params(model.registry(), config.train.seed);

  fs::create_directories(args.out_dir);
  const std::size_t every = std::max<std::size_t>(1, config.train.max_iter / 20);
  const TrainReport report = train_loop(model, train, config.train, [&](const IterationLog& it) {
    if (args.quiet || ((it.iter + 1) % every != 0 && it.iter != 0)) return;
    out << "iter " << it.iter << " lr " << fmt("%.3e", it.lr) << " ce " << fmt("%.5f", it.ce);
    if (it.mse) out << " mse " << fmt("%.5f", *it.mse);
    out << '\n';
  });

  std::ofstream log = open_out(args.out_dir / "train_log.csv");
  write_train_log(report, log);
  log.close();
  save_checkpoint(model.registry(), args.out_dir / "checkpoint.bin");

  if (auto val = validation_samples(config)) {
    const ConfusionMatrix cm = evaluate(model, *val);
    std::ofstream csv = open_out(args.out_dir / "val_iou.csv");
    write_iou_csv(cm, csv);
    out << "val_miou " << fmt("%.6f", miou(cm)) << '\n';
  }
  out << "wrote " << (args.out_dir / "train_log.csv").string() << " and " << (args.out_dir / "checkpoint.bin").string()
      << '\n';
  return 0;
}

int cmd_eval(const EvalArgs& args, std::ostream& out) {
  const RunConfig config = run_config(args.config);
  SegModel<float> model(config.model(parse_model_kind(args.mode)));
  apply_checkpoint(model.registry(), load_checkpoint(args.checkpoint));
  const IngestResult data = ingest_folder(args.data / "images", args.data / "labels");
  for (const auto& w : data.warnings) out << "warning: " << w << '\n';
  const ConfusionMatrix cm = evaluate(model, data.samples);
  if (args.out_csv) {
    std::ofstream csv = open_out(*args.out_csv);
    write_iou_csv(cm, csv);
  }
  write_iou_csv(cm, out);
  return 0;
}

int cmd_verify(const std::string& suite, std::ostream& out, const verify::VerifyOptions& options) {
  const auto results = verify::run_suite(suite, options);
  std::size_t failed = 0;
  for (const auto& r : results) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%-4s %-9s %-24s max_err %.3e", r.passed ? "PASS" : "FAIL", r.suite.c_str(),
                  r.name.c_str(), r.metric);
    out << buf;
    if (!r.detail.empty()) out << "  (" << r.detail << ')';
    out << '\n';
    failed += r.passed ? 0 : 1;
  }
  out << results.size() - failed << '/' << results.size() << " checks passed\n";
  return failed == 0 ? 0 : 1;
}

int cmd_params(const ParamsArgs& args, std::ostream& out) {
  const RunConfig config = run_config(args.config);
  const Shape input{1, 3, args.height, args.width};

  if (args.mode == "epe-module-only") {
    ParamRegistry<float> registry;
    EpeConfig ec;
    ec.patch_size = config.train.patch_size;
    ec.host_channels = config.host_width;
    ec.num_classes = config.num_classes;
    const EpeModule<float> module(registry, ec);
    const EpeCostReport cost = module.cost_report(registry, args.height, args.width);
    out << "epe module (n=" << ec.patch_size << ")\n";
    const char* names[3] = {"encoder_large", "encoder_medium", "encoder_small"};
    for (std::size_t k = 0; k < 3; ++k) print_count(out, names[k], cost.params_per_encoder[k]);
    std::size_t recon = 0;
    for (const char* r : {".recon0.", ".recon1.", ".recon2."}) recon += count_params(registry, "epe" + std::string(r));
    print_count(out, "recon_head", recon);
    print_count(out, "post_concat_bn", count_params(registry, "epe.post_concat_bn."));
    print_count(out, "final_conv", count_params(registry, "epe.final_conv."));
    print_count(out, "total", count_params(registry));
    out << "flops (" << args.height << "x" << args.width << ")\n";
    print_count(out, "flops_routed", cost.flops_routed);
    print_count(out, "flops_uniform_large", cost.flops_uniform_large);
    out << "  flop_ratio                   " << fmt("%10.6f", cost.flop_ratio()) << '\n';
    return 0;
  }

  const ModelKind kind = parse_model_kind(args.mode);
  const SegModel<float> model(config.model(kind));
  const auto& reg = model.registry();
  out << to_string(kind) << " model\n";
  print_count(out, "host.stem", count_params(reg, "host.stem.") + count_params(reg, "host.stem_bn."));
  for (std::size_t b = 0; b < model.host().blocks.size(); ++b) {
    const std::string name = "host.block" + std::to_string(b);
    print_count(out, name, count_params(reg, name + "."));
  }
  if (model.host().classifier) print_count(out, "host.classifier", count_params(reg, "host.classifier."));
  if (model.epe()) print_count(out, "epe", count_params(reg, "epe."));
  print_count(out, "total", count_params(reg));
  out << "flops (" << args.height << "x" << args.width << ")\n";
  std::uint64_t host_flops = model.host().flops(input).ops;
  print_count(out, "host", host_flops);
  if (const auto* module = model.epe()) {
    const EpeCostReport cost = module->cost_report(reg, args.height, args.width);
    print_count(out, "epe.encoders_routed", cost.flops_routed);
  }
  return 0;
}

int cmd_make_toy(const MakeToyArgs& args, std::ostream& out) {
  const RunConfig config = run_config(args.config);
  if (args.split != "train" && args.split != "val") throw ValueError("split must be train or val");
  const auto samples = generate_toy_dataset(args.split == "train" ? config.toy_train : config.toy_val);
  write_dataset(samples, args.out_dir);
  out << "wrote " << samples.size() << " samples to " << args.out_dir.string() << '\n';
  return 0;
}

}  // namespace epe::cli
