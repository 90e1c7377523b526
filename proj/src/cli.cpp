#include "fan/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include "fan/config.hpp"
#include "fan/io.hpp"
#include "fan/metrics.hpp"
#include "fan/synthetic.hpp"
#include "fan/trainer.hpp"

namespace fan {

namespace fs = std::filesystem;

namespace {

// Validation failures detected before any work starts; mapped to exit 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<fs::path> list_images(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && is_image_path(e.path())) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  return files;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::pair<ExtractorSpec, TensorContainer> load_extractor(const std::string& source) {
  if (source == "tiny") return tiny_spec(0);
  try {
    TensorContainer weights = TensorContainer::load(source);
    ExtractorSpec spec = spec_from_container(weights);
    return {std::move(spec), std::move(weights)};
  } catch (const std::exception& e) {
    throw UsageError("extractor_weights '" + source + "': " + e.what());
  }
}

std::vector<Tensor4<float>> load_patches(const RunConfig& cfg, std::ostream& err) {
  if (cfg.data_dir.empty()) throw UsageError("data_dir is not set");
  if (!fs::is_directory(cfg.data_dir)) throw UsageError("data_dir is not a directory: " + cfg.data_dir);
  const auto files = list_images(cfg.data_dir);
  if (files.empty()) throw UsageError("data_dir contains no .png/.ppm images: " + cfg.data_dir);
  if (cfg.patch_size == 0) throw UsageError("patch_size must be positive");
  std::vector<Tensor4<float>> patches;
  for (std::size_t i = 0; i < files.size(); ++i) {
    Tensor4<float> img;
    try {
      img = read_image(files[i]);
    } catch (const std::exception& e) {
      throw UsageError(e.what());
    }
    if (img.h() == cfg.patch_size && img.w() == cfg.patch_size) {
      patches.push_back(std::move(img));
      continue;
    }
    auto crops = extract_patches(img, cfg.patch_size, std::max<std::size_t>(1, cfg.patch_size / 2),
                                 cfg.patches_per_image, derive_seed(cfg.seed, 100 + i));
    if (crops.empty()) {
      err << "warning: " << files[i].filename().string() << " (" << img.h() << "x" << img.w()
          << ") is smaller than patch_size " << cfg.patch_size << "; skipped\n";
    }
    for (auto& c : crops) patches.push_back(std::move(c));
  }
  if (patches.empty()) throw UsageError("no training patches could be taken from " + cfg.data_dir);
  return patches;
}

int cmd_train(const std::string& config_path, const std::map<std::string, std::string>& overrides, std::ostream& out,
              std::ostream& err) {
  RunConfig cfg;
  std::vector<Tensor4<float>> patches;
  std::pair<ExtractorSpec, TensorContainer> extractor;
  TrainConfig tc;
  try {
    if (!config_path.empty()) cfg = RunConfig::load(config_path);
    for (const auto& [k, v] : overrides) cfg.set(k, v);
    extractor = load_extractor(cfg.extractor_weights);
    patches = load_patches(cfg, err);
    tc.patch_size = cfg.patch_size;
    tc.batch_size = cfg.batch_size;
    tc.steps = cfg.steps;
    tc.learning_rate = cfg.learning_rate;
    tc.seed = cfg.seed;
    tc.epsilon_aug = cfg.epsilon_aug;
    tc.latent_channels = cfg.latent_channels;
    fs::create_directories(cfg.out_dir);
    write_text(fs::path(cfg.out_dir) / "config.effective", cfg.to_text());
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }

  out << "training on " << patches.size() << " patches of " << cfg.patch_size << "x" << cfg.patch_size << "\n";
  const std::size_t every = std::max<std::size_t>(1, cfg.steps / 20);
  TrainResult result;
  try {
    result = train(patches, tc, extractor.first, extractor.second, [&](std::size_t step, double loss) {
      if (step % every == 0 || step + 1 == cfg.steps) out << "step " << step << " loss " << fmt(loss) << "\n";
    });
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: training failed: " << e.what() << "\n";
    return kExitRuntime;
  }
  for (const auto& name : result.dead_parameters) err << "warning: no gradient reached " << name << "\n";

  try {
    std::string log;
    for (std::size_t i = 0; i < result.loss_history.size(); ++i) log += std::to_string(i) + "\t" + fmt(result.loss_history[i]) + "\n";
    write_text(fs::path(cfg.out_dir) / "loss.tsv", log);
    std::string held;
    for (const auto& h : result.holdout) held += std::to_string(h.step) + "\t" + fmt(h.loss) + "\n";
    write_text(fs::path(cfg.out_dir) / "holdout.tsv", held);
    result.model->to_container(result.loss_history).save(fs::path(cfg.out_dir) / "model.fanc");
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  if (result.aborted) {
    err << "error: training aborted: " << result.message << "; last good parameters saved\n";
    return kExitRuntime;
  }
  out << "wrote " << (fs::path(cfg.out_dir) / "model.fanc").string() << "\n";
  return kExitOk;
}

int cmd_normalize(const std::string& model_path, const std::string& input, const std::string& output, std::ostream& out,
                  std::ostream& err) {
  std::optional<FanModel> model;
  std::vector<fs::path> files;
  try {
    model.emplace(FanModel::from_container(TensorContainer::load(model_path)));
    if (fs::is_directory(input)) files = list_images(input);
    else if (fs::is_regular_file(input)) files.push_back(input);
    else throw UsageError("input does not exist: " + input);
    if (files.empty()) throw UsageError("no .png/.ppm images in " + input);
    fs::create_directories(output);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  bool crop_reported = false;
  std::size_t failed = 0;
  for (const auto& f : files) {
    try {
      const auto img = read_image(f);
      const auto result = model->normalize(img);
      write_image(result.image, fs::path(output) / f.filename());
      if (!crop_reported) {
        const auto& r = result.region;
        out << "crop: top " << r.top << " left " << r.left << " bottom " << img.h() - static_cast<std::size_t>(r.bottom())
            << " right " << img.w() - static_cast<std::size_t>(r.right()) << "\n";
        crop_reported = true;
      }
    } catch (const std::exception& e) {
      err << "error: " << f.filename().string() << ": " << e.what() << "\n";
      ++failed;
    }
  }
  out << "normalized " << files.size() - failed << " of " << files.size() << " images\n";
  return failed == 0 ? kExitOk : kExitRuntime;
}

int cmd_evaluate(const std::string& normalized, const std::string& reference, const std::string& originals,
                 std::ostream& out, std::ostream& err) {
  EvaluationResult result;
  try {
    result = evaluate_pairs(normalized, reference, originals);
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  write_report(out, result);
  for (const auto& name : result.unmatched) err << "unmatched: " << name << "\n";
  if (result.reports.empty()) {
    err << "error: no file name is present in all three directories\n";
    return kExitUsage;
  }
  return result.unmatched.empty() ? kExitOk : kExitUsage;
}

int cmd_inspect(const std::string& path, std::ostream& out, std::ostream& err) {
  TensorContainer c;
  try {
    c = TensorContainer::load(path);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  out << "name\tdims\tmin\tmax\tmean\n";
  for (const auto& e : c.entries()) {
    std::string dims;
    for (std::size_t i = 0; i < e.dims.size(); ++i) dims += (i ? "x" : "") + std::to_string(e.dims[i]);
    if (dims.empty()) dims = "-";
    out << e.name << "\t" << dims;
    if (e.data.empty()) {
      out << "\t-\t-\t-\n";
      continue;
    }
    const auto [lo, hi] = std::minmax_element(e.data.begin(), e.data.end());
    double sum = 0.0;
    for (float v : e.data) sum += v;
    out << "\t" << fmt(*lo) << "\t" << fmt(*hi) << "\t" << fmt(sum / static_cast<double>(e.data.size())) << "\n";
  }
  return kExitOk;
}

int cmd_synth(std::size_t count, std::size_t size, std::uint64_t seed, const std::string& output, std::ostream& out,
              std::ostream& err) {
  try {
    SynthOptions opt;
    opt.height = opt.width = size;
    fs::create_directories(output);
    const auto images = synth_dataset(count, opt, seed);
    for (std::size_t i = 0; i < images.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "synth_%04zu.png", i);
      write_image(images[i], fs::path(output) / name);
    }
    out << "wrote " << images.size() << " images to " << output << "\n";
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Feature-aware stain normalisation"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "Train a normalisation model");
  std::string config_path;
  train->add_option("--config", config_path, "key=value run configuration")->check(CLI::ExistingFile);
  std::map<std::string, std::string> overrides;
  std::map<std::string, std::string> raw_overrides;
  for (const auto& key : RunConfig::keys()) {
    train->add_option("--" + key, raw_overrides[key], "Override " + key);
  }

  auto* normalize = app.add_subcommand("normalize", "Normalise images with a trained model");
  std::string model_path, input, output;
  normalize->add_option("--model", model_path, "Checkpoint (.fanc)")->required();
  normalize->add_option("--input", input, "Image file or directory")->required();
  normalize->add_option("--output", output, "Output directory")->required();

  auto* evaluate = app.add_subcommand("evaluate", "Compute SSDH, SDSIM and LAB volume per image pair");
  std::string normalized_dir, reference_dir, originals_dir;
  evaluate->add_option("--normalized", normalized_dir)->required();
  evaluate->add_option("--reference", reference_dir)->required();
  evaluate->add_option("--originals", originals_dir)->required();

  auto* inspect = app.add_subcommand("inspect", "List the entries of a tensor container");
  std::string container_path;
  inspect->add_option("--container,container", container_path)->required();

  auto* synth = app.add_subcommand("synth", "Write synthetic tissue images");
  std::size_t count = 200, size = 64;
  std::uint64_t seed = 0;
  std::string synth_out;
  synth->add_option("--count", count);
  synth->add_option("--size", size);
  synth->add_option("--seed", seed);
  synth->add_option("--output", synth_out)->required();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (train->parsed()) {
    for (const auto& key : RunConfig::keys())
      if (train->count("--" + key) > 0) overrides[key] = raw_overrides[key];
    return cmd_train(config_path, overrides, out, err);
  }
  if (normalize->parsed()) return cmd_normalize(model_path, input, output, out, err);
  if (evaluate->parsed()) return cmd_evaluate(normalized_dir, reference_dir, originals_dir, out, err);
  if (inspect->parsed()) return cmd_inspect(container_path, out, err);
  return cmd_synth(count, size, seed, synth_out, out, err);
}

}  // namespace fan
