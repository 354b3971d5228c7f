// mosaicgen command-line entry point.
//
// Exit codes: 0 success, 2 usage or validation failure, 3 runtime failure.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mosaicgen/mosaicgen.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace mosaicgen;

namespace {

constexpr const char* kVersion = "0.1.0";
constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void write_json(const json& j, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

std::vector<double> parse_list(const std::string& text, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ValidationError(std::string("bad ") + what + " entry '" + item + "'");
    }
  }
  if (out.empty()) throw ValidationError(std::string(what) + " list is empty");
  return out;
}

int resolve_threads(int flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("MOSAICGEN_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return 1;
}

std::string json_path(const fs::path& p) { return fs::absolute(p).lexically_normal().string(); }

json module_versions() {
  return {{"mosaicgen", kVersion}, {"libpng", PNG_LIBPNG_VER_STRING}};
}

// --------------------------------------------------------------------------
// Shared run options for generate / ablate

struct RunOptions {
  std::string config;
  std::string ref;
  std::string pool;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<double> w0;
  std::optional<int> level;
  std::optional<std::string> mode;
  std::optional<std::string> label;
  int threads = 0;
};

MosaicConfig resolve_config(const RunOptions& o) {
  MosaicConfig cfg = o.config.empty() ? MosaicConfig{} : load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.w0) cfg.w0 = *o.w0;
  if (o.level) cfg.level = *o.level;
  if (o.mode) cfg.noise_mode = parse_noise_mode(*o.mode);
  if (o.label) cfg.labels = {*o.label};
  cfg.validate();
  return cfg;
}

ExemplarPool load_pool_for(const fs::path& dir, const Image& ref, const MosaicConfig& cfg) {
  const int n = 1 << cfg.level;
  if (ref.height() % n != 0 || ref.width() % n != 0) {
    throw DimensionError("reference " + ref.shape() + " not divisible by 2^L = " + std::to_string(n));
  }
  return load_exemplar_pool(dir, PoolShape{ref.channels(), ref.height() / n * cfg.scale, ref.width() / n * cfg.scale});
}

json tile_logs_json(const MosaicResult& r) {
  json tiles = json::array();
  for (std::size_t k = 0; k < r.logs.size(); ++k) {
    const Condition c = r.config.condition_for(k);
    tiles.push_back({{"index", k},
                     {"label", c.label.value_or(kUnconditionalLabel)},
                     {"stream_seed", default_tile_seed(r.config.seed, k)},
                     {"final_loss", r.logs[k].final_loss},
                     {"final_weight", r.logs[k].final_weight},
                     {"weights", r.logs[k].weights},
                     {"losses", r.logs[k].losses}});
  }
  return tiles;
}

// --------------------------------------------------------------------------
// Subcommands

int cmd_generate(const RunOptions& o) {
  const auto t_start = Clock::now();
  const MosaicConfig cfg = resolve_config(o);
  const int threads = resolve_threads(o.threads);

  auto t0 = Clock::now();
  const Image ref = load_image(o.ref);
  const ExemplarPool pool = load_pool_for(o.pool, ref, cfg);
  const double t_load = seconds_since(t0);

  const MosaicResult result = generate_mosaic(ref, pool, cfg, threads);

  t0 = Clock::now();
  const fs::path out = o.out;
  save_image(result.mosaic, out / "mosaic.png");
  for (std::size_t k = 0; k < result.tiles.size(); ++k) {
    std::ostringstream name;
    name << "tile_" << std::setw(4) << std::setfill('0') << k << ".png";
    save_image(result.tiles[k], out / "tiles" / name.str());
  }
  const double t_write = seconds_since(t0);

  t0 = Clock::now();
  const MetricsReport report = eval_report(ref, result.mosaic);
  write_json(report.to_json(), out / "metrics.json");
  const double t_metrics = seconds_since(t0);

  json manifest;
  manifest["command"] = "generate";
  manifest["module_versions"] = module_versions();
  manifest["config"] = config_to_json(cfg);
  manifest["seeds"] = {{"master", cfg.seed},
                       {"coarse_stream", derive_stream_seed(cfg.seed, kCoarseStream)},
                       {"tile_stream_rule", "derive_stream_seed(master, tile_index)"}};
  manifest["inputs"] = {{"ref", json_path(o.ref)}, {"pool", json_path(o.pool)}, {"pool_size", pool.size()}};
  manifest["outputs"] = {{"mosaic", "mosaic.png"},
                         {"tiles_dir", "tiles"},
                         {"metrics", "metrics.json"},
                         {"mosaic_height", result.mosaic.height()},
                         {"mosaic_width", result.mosaic.width()}};
  manifest["threads"] = threads;
  manifest["wall_time_s"] = {{"load", t_load},
                             {"generate", result.wall_seconds},
                             {"write", t_write},
                             {"metrics", t_metrics},
                             {"total", seconds_since(t_start)}};
  manifest["tiles"] = tile_logs_json(result);
  write_json(manifest, out / "manifest.json");
  std::cout << "wrote " << (out / "mosaic.png").string() << " (" << result.tiles.size() << " tiles, "
            << std::fixed << std::setprecision(1) << result.wall_seconds << "s)\n";
  return 0;
}

struct ClassicOptions {
  std::string ref;
  std::string pool;
  std::string out;
  int level = 3;
  std::string adjust = "none";
  int tile_size = 0;
  int max_reuse = 0;
};

int cmd_classic(const ClassicOptions& o) {
  const auto t_start = Clock::now();
  const Adjust adjust = parse_adjust(o.adjust);
  const Image ref = load_image(o.ref);
  if (o.level < 0 || o.level > 10) throw ValidationError("level must be in [0, 10]");
  const int n = 1 << o.level;
  if (ref.height() % n != 0 || ref.width() % n != 0) {
    throw DimensionError("reference " + ref.shape() + " not divisible by 2^L = " + std::to_string(n));
  }
  const int th = o.tile_size > 0 ? o.tile_size : ref.height() / n;
  const int tw = o.tile_size > 0 ? o.tile_size : ref.width() / n;
  TilePool pool = load_tile_pool(o.pool, PoolShape{ref.channels(), th, tw},
                                 o.max_reuse > 0 ? std::optional<int>(o.max_reuse) : std::nullopt);
  const ClassicResult result = classic_mosaic(ref, pool, o.level, adjust);
  const fs::path out = o.out;
  save_image(result.mosaic, out / "mosaic.png");

  json matches = json::array();
  for (std::size_t k = 0; k < result.matches.size(); ++k) {
    matches.push_back({{"block", k}, {"tile", result.matches[k].index}, {"distance", result.matches[k].distance}});
  }
  json manifest;
  manifest["command"] = "classic";
  manifest["module_versions"] = module_versions();
  manifest["config"] = {{"level", o.level},
                        {"adjust", to_string(adjust)},
                        {"tile_height", th},
                        {"tile_width", tw},
                        {"max_reuse", o.max_reuse > 0 ? json(o.max_reuse) : json(nullptr)}};
  manifest["inputs"] = {{"ref", json_path(o.ref)}, {"pool", json_path(o.pool)}, {"pool_size", pool.size()}};
  manifest["outputs"] = {{"mosaic", "mosaic.png"}};
  manifest["matches"] = matches;
  manifest["wall_time_s"] = {{"total", seconds_since(t_start)}};
  write_json(manifest, out / "manifest.json");
  std::cout << "wrote " << (out / "mosaic.png").string() << " (" << result.matches.size() << " tiles)\n";
  return 0;
}

struct EvalOptions {
  std::string ref;
  std::string mosaic;
  std::string batch;
  std::string out;
};

int cmd_eval(const EvalOptions& o) {
  if (o.batch.empty() == (o.ref.empty() || o.mosaic.empty())) {
    if (o.batch.empty()) throw ValidationError("eval needs --ref and --mosaic, or --batch");
    throw ValidationError("--batch cannot be combined with --ref/--mosaic");
  }
  if (o.batch.empty()) {
    const MetricsReport r = eval_report(load_image(o.ref), load_image(o.mosaic));
    write_json(r.to_json(), o.out);
    std::cout << "wrote " << o.out << "\n";
    return 0;
  }
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(o.batch))
    if (e.is_directory() && fs::exists(e.path() / "ref.png") && fs::exists(e.path() / "mosaic.png"))
      dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw ValidationError("no <pair>/ref.png + <pair>/mosaic.png found under " + o.batch);
  json pairs = json::array();
  std::map<std::string, double> sums;
  std::vector<std::string> order;
  for (const auto& d : dirs) {
    const json m = eval_report(load_image(d / "ref.png"), load_image(d / "mosaic.png")).to_json();
    for (const auto& [k, v] : m.items()) {
      if (!v.is_number_float()) continue;
      if (!sums.count(k)) order.push_back(k);
      sums[k] += v.get<double>();
    }
    pairs.push_back({{"name", d.filename().string()}, {"metrics", m}});
  }
  json mean;
  for (const auto& k : order) mean[k] = sums[k] / static_cast<double>(dirs.size());
  json report;
  report["count"] = dirs.size();
  report["mean"] = mean;
  report["pairs"] = pairs;
  write_json(report, o.out);
  std::cout << "wrote " << o.out << " (" << dirs.size() << " pairs)\n";
  return 0;
}

struct AblateOptions {
  RunOptions run;
  std::string sweep = "0,500,2000,5000,10000,20000";
  std::string seeds = "0,1,2,3,4,5,6,7,8,9,10,11,12,13,14";
};

std::string number_tag(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

int cmd_ablate(const AblateOptions& o) {
  const auto t_start = Clock::now();
  MosaicConfig base = resolve_config(o.run);
  const int threads = resolve_threads(o.run.threads);
  const std::vector<double> sweep = parse_list(o.sweep, "sweep");
  std::vector<std::uint64_t> seeds;
  for (double s : parse_list(o.seeds, "seed")) {
    if (s < 0 || s != std::floor(s)) throw ValidationError("seeds must be non-negative integers");
    seeds.push_back(static_cast<std::uint64_t>(s));
  }
  const Image ref = load_image(o.run.ref);
  const ExemplarPool pool = load_pool_for(o.run.pool, ref, base);
  const fs::path out = o.run.out;
  fs::create_directories(out);

  std::ofstream csv(out / "ablation.csv");
  if (!csv) throw IoError("cannot write " + (out / "ablation.csv").string());
  csv << "w0,seed,e1,e2,e3,e4,psnr,ssim\n";
  csv << std::setprecision(10);
  json cells = json::array();
  for (double w0 : sweep) {
    for (std::uint64_t seed : seeds) {
      MosaicConfig cfg = base;
      cfg.w0 = w0;
      cfg.seed = seed;
      const MosaicResult r = generate_mosaic(ref, pool, cfg, threads);
      const MetricsReport m = eval_report(ref, r.mosaic);
      const fs::path cell = out / ("w0_" + number_tag(w0)) / ("seed_" + std::to_string(seed));
      save_image(r.mosaic, cell / "mosaic.png");
      csv << number_tag(w0) << "," << seed;
      for (double e : m.pyramid) csv << "," << e;
      csv << "," << m.psnr.at(64) << "," << m.ssim.at(64) << "\n";
      cells.push_back({{"w0", w0}, {"seed", seed}, {"mosaic", fs::relative(cell / "mosaic.png", out).string()},
                       {"wall_time_s", r.wall_seconds}});
      std::cout << "w0=" << number_tag(w0) << " seed=" << seed << " e3=" << m.pyramid.at(2) << "\n";
    }
  }
  json manifest;
  manifest["command"] = "ablate";
  manifest["module_versions"] = module_versions();
  manifest["config"] = config_to_json(base);
  manifest["sweep_w0"] = sweep;
  manifest["seeds"] = seeds;
  manifest["inputs"] = {{"ref", json_path(o.run.ref)}, {"pool", json_path(o.run.pool)}};
  manifest["outputs"] = {{"csv", "ablation.csv"}, {"csv_metric_resolution", 64}};
  manifest["cells"] = cells;
  manifest["threads"] = threads;
  manifest["wall_time_s"] = {{"total", seconds_since(t_start)}};
  write_json(manifest, out / "manifest.json");
  return 0;
}

struct NoiseOptions {
  std::string out;
  int height = 64;
  int width = 64;
  int scale = 8;
  int channels = 1;
  std::string mode = "consistent";
  std::uint64_t seed = 0;
};

// [-3, 3] -> [0, 1]
Image noise_to_display(const Image& n) {
  Image out = n;
  for (double& v : out.data()) v = (v + 3.0) / 6.0;
  return out;
}

struct BlockStats {
  double max_sum_residual = 0.0;
  double max_relative_sum_residual = 0.0;
  double residual_variance = 0.0;  // mean squared deviation from X/N
};

BlockStats block_stats(const Image& coarse, const Image& fine, int s) {
  BlockStats st;
  const double n = static_cast<double>(s) * s;
  double sq = 0.0;
  for (int c = 0; c < coarse.channels(); ++c)
    for (int y = 0; y < coarse.height(); ++y)
      for (int x = 0; x < coarse.width(); ++x) {
        const double xv = coarse.at(c, y, x);
        double sum = 0.0;
        for (int dy = 0; dy < s; ++dy)
          for (int dx = 0; dx < s; ++dx) {
            const double v = fine.at(c, y * s + dy, x * s + dx);
            sum += v;
            sq += (v - xv / n) * (v - xv / n);
          }
        st.max_sum_residual = std::max(st.max_sum_residual, std::abs(sum - xv));
        st.max_relative_sum_residual =
            std::max(st.max_relative_sum_residual, std::abs(sum - xv) / std::max(1.0, std::abs(xv)));
      }
  st.residual_variance = sq / static_cast<double>(fine.size());
  return st;
}

int cmd_noise(const NoiseOptions& o) {
  const NoiseMode mode = parse_noise_mode(o.mode);
  if (o.channels != 1 && o.channels != 3) throw ValidationError("channels must be 1 or 3");
  if (o.height < 1 || o.width < 1) throw ValidationError("height and width must be >= 1");
  const int s = o.scale;
  const CoarseLatent coarse = sample_coarse(o.channels, o.height, o.width, derive_stream_seed(o.seed, kCoarseStream));
  NormalStream rng(derive_stream_seed(o.seed, 0));
  const NoiseField raw = subsample_noise(coarse, s, rng, mode);
  const NoiseField fine = normalize_variance(raw, coarse);

  const fs::path out = o.out;
  save_image(noise_to_display(coarse.noise), out / "coarse.png");
  save_image(noise_to_display(fine.noise), out / "fine.png");

  const double n = static_cast<double>(s) * s;
  const BlockStats r = block_stats(coarse.noise, raw.noise, s);
  const BlockStats f = block_stats(coarse.noise, fine.noise, s);
  json stats;
  stats["mode"] = to_string(mode);
  stats["seed"] = o.seed;
  stats["scale"] = s;
  stats["coarse_shape"] = {coarse.noise.channels(), coarse.noise.height(), coarse.noise.width()};
  stats["fine_shape"] = {fine.noise.channels(), fine.noise.height(), fine.noise.width()};
  stats["fine_pixels"] = fine.noise.size();
  stats["max_block_sum_residual"] = std::max(r.max_sum_residual, f.max_sum_residual);
  stats["max_relative_block_sum_residual"] = std::max(r.max_relative_sum_residual, f.max_relative_sum_residual);
  stats["variance_estimate"] = f.residual_variance;
  stats["raw_residual_variance"] = r.residual_variance;
  stats["raw_residual_variance_expected"] =
      mode == NoiseMode::Literal ? (n - 1.0) / (n * n) : (n - 1.0) / n;
  stats["normalized_residual_variance"] = f.residual_variance;
  stats["normalized_residual_variance_expected"] =
      s == 1 ? 0.0 : (mode == NoiseMode::Literal ? 1.0 / n : 1.0);
  stats["variance_normalized"] = fine.variance_normalized;
  stats["fine_png"] = "normalized field";
  stats["display_mapping"] = "[-3, 3] -> [0, 1]";
  write_json(stats, out / "stats.json");
  std::cout << "wrote " << (out / "fine.png").string() << "\n";
  return 0;
}

struct SampleOptions {
  std::string out;
  int size = 128;
  int tile = 64;
  int per_label = 8;
  std::uint64_t seed = 11;
};

int cmd_samples(const SampleOptions& o) {
  const fs::path out = o.out;
  save_image(make_reference(o.size, o.size), out / "reference.png");
  const ExemplarPool pool = make_exemplar_pool(o.per_label, o.tile, o.tile, o.seed);
  std::map<std::string, int> counter;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const std::string& label = pool.label(i);
    std::ostringstream name;
    name << label << "_" << std::setw(2) << std::setfill('0') << counter[label]++ << ".png";
    save_image(pool.exemplar(i), out / "pool" / label / name.str());
  }
  std::ofstream cfg(out / "default.cfg");
  cfg << "# mosaicgen run configuration (all keys required except label_grid)\n" << config_to_text(MosaicConfig{});
  std::cout << "wrote samples to " << out.string() << "\n";
  return 0;
}

void add_run_options(CLI::App* cmd, RunOptions& o) {
  cmd->add_option("--config", o.config, "config file (key = value) or a run manifest.json");
  cmd->add_option("--ref", o.ref, "reference image (PNG)")->required();
  cmd->add_option("--pool", o.pool, "exemplar directory, one subdirectory per label")->required();
  cmd->add_option("--out", o.out, "output directory")->required();
  cmd->add_option("--seed", o.seed, "master seed override");
  cmd->add_option("--w0", o.w0, "initial guidance weight override");
  cmd->add_option("--level", o.level, "mosaic level override (2^L x 2^L tiles)");
  cmd->add_option("--mode", o.mode, "noise mode override: consistent|literal");
  cmd->add_option("--label", o.label, "broadcast label override");
  cmd->add_option("--threads", o.threads, "worker threads (fallback: MOSAICGEN_THREADS, then 1)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mosaicgen: generative and classical photomosaics"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  RunOptions gen;
  auto* generate = app.add_subcommand("generate", "guided diffusion mosaic");
  add_run_options(generate, gen);

  ClassicOptions cls;
  auto* classic = app.add_subcommand("classic", "nearest-tile baseline");
  classic->add_option("--ref", cls.ref, "reference image")->required();
  classic->add_option("--pool", cls.pool, "directory of tile images (searched recursively)")->required();
  classic->add_option("--out", cls.out, "output directory")->required();
  classic->add_option("--level", cls.level, "mosaic level");
  classic->add_option("--mode,--adjust", cls.adjust, "none|tone|histogram");
  classic->add_option("--tile-size", cls.tile_size, "tile edge in pixels (default: block size)");
  classic->add_option("--max-reuse", cls.max_reuse, "cap on uses per tile (default: unlimited)");

  EvalOptions ev;
  auto* eval = app.add_subcommand("eval", "global fidelity metrics");
  eval->add_option("--ref", ev.ref, "reference image");
  eval->add_option("--mosaic", ev.mosaic, "mosaic image");
  eval->add_option("--batch", ev.batch, "directory of <pair>/{ref,mosaic}.png");
  eval->add_option("--out", ev.out, "output JSON path")->required();

  AblateOptions abl;
  auto* ablate = app.add_subcommand("ablate", "guidance weight sweep");
  add_run_options(ablate, abl.run);
  ablate->add_option("--sweep", abl.sweep, "comma-separated w0 values");
  ablate->add_option("--seeds", abl.seeds, "comma-separated seeds");

  NoiseOptions nz;
  auto* noise = app.add_subcommand("noise", "export a coherent noise field");
  noise->add_option("--out", nz.out, "output directory")->required();
  noise->add_option("--height", nz.height, "coarse height");
  noise->add_option("--width", nz.width, "coarse width");
  noise->add_option("--scale", nz.scale, "fine pixels per coarse pixel edge");
  noise->add_option("--channels", nz.channels, "1 or 3");
  noise->add_option("--mode", nz.mode, "consistent|literal");
  noise->add_option("--seed", nz.seed, "seed");

  SampleOptions smp;
  auto* samples = app.add_subcommand("samples", "write procedural sample assets");
  samples->add_option("--out", smp.out, "output directory")->required();
  samples->add_option("--size", smp.size, "reference edge");
  samples->add_option("--tile", smp.tile, "exemplar edge");
  samples->add_option("--per-label", smp.per_label, "exemplars per label");
  samples->add_option("--seed", smp.seed, "seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (*generate) return cmd_generate(gen);
    if (*classic) return cmd_classic(cls);
    if (*eval) return cmd_eval(ev);
    if (*ablate) return cmd_ablate(abl);
    if (*noise) return cmd_noise(nz);
    if (*samples) return cmd_samples(smp);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DimensionError& e) {
    std::cerr << "divisibility error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ValidationError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kExitUsage;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
