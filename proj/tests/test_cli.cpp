#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "mosaicgen/config.hpp"
#include "mosaicgen/png_io.hpp"

using namespace mosaicgen;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(MOSAICGEN_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / ("mosaicgen_cli_" + std::to_string(::getpid()));
    fs::remove_all(root_);
    ASSERT_EQ(run("samples --out " + (root_ / "samples").string() + " --size 32 --tile 32 --per-label 2"), 0);
    MosaicConfig c;
    c.level = 2;
    c.steps = 10;
    c.seed = 5;
    std::ofstream(root_ / "fast.cfg") << config_to_text(c);
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static fs::path dir(const std::string& name) { return root_ / name; }
  static std::string ref() { return (root_ / "samples" / "reference.png").string(); }
  static std::string pool() { return (root_ / "samples" / "pool").string(); }
  static std::string fast_generate(const std::string& out, const std::string& extra = "") {
    return "generate --config " + (root_ / "fast.cfg").string() + " --ref " + ref() + " --pool " + pool() +
           " --out " + dir(out).string() + " " + extra;
  }

  static fs::path root_;
};

fs::path Cli::root_;

}  // namespace

TEST_F(Cli, SamplesLayout) {
  EXPECT_TRUE(fs::exists(dir("samples") / "reference.png"));
  EXPECT_TRUE(fs::exists(dir("samples") / "pool" / "dots" / "dots_01.png"));
  EXPECT_NO_THROW(load_config(dir("samples") / "default.cfg"));
}

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("generate --ref " + ref()), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run("--help"), 0);
}

TEST_F(Cli, MissingConfigKeyExitsTwo) {
  std::ifstream in(dir("fast.cfg"));
  std::ofstream out(dir("partial.cfg"));
  std::string line;
  while (std::getline(in, line))
    if (line.rfind("gamma", 0) != 0) out << line << "\n";
  out.close();
  EXPECT_EQ(run("generate --config " + dir("partial.cfg").string() + " --ref " + ref() + " --pool " + pool() +
                " --out " + dir("partial").string()),
            2);
}

TEST_F(Cli, IoErrorsExitThree) {
  EXPECT_EQ(run("generate --ref /nonexistent.png --pool " + pool() + " --out " + dir("x").string()), 3);
  EXPECT_EQ(run("eval --ref /nonexistent.png --mosaic " + ref() + " --out " + dir("x.json").string()), 3);
}

TEST_F(Cli, GenerateWritesArtifacts) {
  ASSERT_EQ(run(fast_generate("gen", "--label stripes")), 0);
  const fs::path out = dir("gen");
  for (const char* f : {"mosaic.png", "metrics.json", "manifest.json", "tiles/tile_0000.png", "tiles/tile_0015.png"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
  const Image mosaic = load_image(out / "mosaic.png");
  EXPECT_EQ(mosaic.height(), 128);
  const json m = read_json(out / "manifest.json");
  for (const char* key : {"command", "module_versions", "config", "seeds", "inputs", "outputs", "threads",
                          "wall_time_s", "tiles"})
    EXPECT_TRUE(m.contains(key)) << key;
  EXPECT_EQ(m["seeds"]["master"].get<std::uint64_t>(), 5u);
  ASSERT_EQ(m["tiles"].size(), 16u);
  EXPECT_EQ(m["tiles"][3]["label"], "stripes");
  EXPECT_EQ(m["tiles"][0]["weights"].size(), 10u);
  const json metrics = read_json(out / "metrics.json");
  EXPECT_TRUE(metrics.contains("psnr_32"));
  EXPECT_TRUE(metrics.contains("pyramid_e4"));
}

TEST_F(Cli, GenerateIsDeterministicAcrossRunsAndThreads) {
  ASSERT_EQ(run(fast_generate("det_a", "--seed 7")), 0);
  ASSERT_EQ(run(fast_generate("det_b", "--seed 7")), 0);
  ASSERT_EQ(run(fast_generate("det_c", "--seed 7 --threads 4")), 0);
  ASSERT_EQ(run(fast_generate("det_d", "--seed 8")), 0);
  const std::string a = slurp(dir("det_a") / "mosaic.png");
  EXPECT_EQ(a, slurp(dir("det_b") / "mosaic.png"));
  EXPECT_EQ(a, slurp(dir("det_c") / "mosaic.png"));
  EXPECT_NE(a, slurp(dir("det_d") / "mosaic.png"));
}

TEST_F(Cli, ManifestReplaysRun) {
  ASSERT_EQ(run(fast_generate("replay_src", "--seed 3 --w0 500 --label dots")), 0);
  ASSERT_EQ(run("generate --config " + (dir("replay_src") / "manifest.json").string() + " --ref " + ref() +
                " --pool " + pool() + " --out " + dir("replay_dst").string()),
            0);
  EXPECT_EQ(slurp(dir("replay_src") / "mosaic.png"), slurp(dir("replay_dst") / "mosaic.png"));
}

TEST_F(Cli, UnknownLabelExitsTwo) { EXPECT_EQ(run(fast_generate("badlabel", "--label sunsets")), 2); }

TEST_F(Cli, IndivisibleReferenceExitsTwo) {
  save_image(Image(3, 30, 30, 0.5), dir("odd.png"));
  EXPECT_EQ(run("generate --config " + dir("fast.cfg").string() + " --ref " + dir("odd.png").string() +
                " --pool " + pool() + " --out " + dir("odd").string()),
            2);
}

TEST_F(Cli, ClassicSelfPoolReproducesReference) {
  const fs::path tiles = dir("self_tiles");
  const Image r = load_image(ref());
  fs::create_directories(tiles);
  int k = 0;
  for (int by = 0; by < 4; ++by)
    for (int bx = 0; bx < 4; ++bx) {
      std::ostringstream name;
      name << "t" << k++ << ".png";
      save_image(crop(r, by * 8, bx * 8, 8, 8), tiles / name.str());
    }
  ASSERT_EQ(run("classic --ref " + ref() + " --pool " + tiles.string() + " --out " + dir("classic_self").string() +
                " --level 2 --adjust none"),
            0);
  EXPECT_EQ(load_image(dir("classic_self") / "mosaic.png"), r);
  const json m = read_json(dir("classic_self") / "manifest.json");
  ASSERT_EQ(m["matches"].size(), 16u);
  for (const auto& match : m["matches"]) EXPECT_EQ(match["distance"].get<double>(), 0.0);
}

TEST_F(Cli, ClassicAdjustmentsAndErrors) {
  for (const char* adj : {"none", "tone", "histogram"}) {
    EXPECT_EQ(run("classic --ref " + ref() + " --pool " + pool() + " --out " + dir(std::string("classic_") + adj).string() +
                  " --level 3 --mode " + adj),
              0)
        << adj;
  }
  const json m = read_json(dir("classic_tone") / "manifest.json");
  EXPECT_EQ(m["matches"].size(), 64u);
  EXPECT_EQ(run("classic --ref " + ref() + " --pool " + pool() + " --out " + dir("c_bad").string() + " --adjust sepia"), 2);
  EXPECT_EQ(run("classic --ref " + ref() + " --pool " + pool() + " --out " + dir("c_cap").string() +
                " --level 3 --max-reuse 1"),
            2);  // 64 blocks, 8 tiles
}

TEST_F(Cli, EvalIdenticalAndMismatched) {
  ASSERT_EQ(run("eval --ref " + ref() + " --mosaic " + ref() + " --out " + dir("eval_same.json").string()), 0);
  const json j = read_json(dir("eval_same.json"));
  EXPECT_EQ(j["psnr_32"].get<double>(), 99.0);
  EXPECT_NEAR(j["ssim_32"].get<double>(), 1.0, 1e-12);
  save_image(Image(3, 48, 32, 0.5), dir("tall.png"));
  EXPECT_EQ(run("eval --ref " + ref() + " --mosaic " + dir("tall.png").string() + " --out " +
                dir("eval_bad.json").string()),
            2);
  EXPECT_EQ(run("eval --out " + dir("eval_none.json").string()), 2);
}

TEST_F(Cli, EvalBatch) {
  for (const char* pair : {"p0", "p1"}) {
    fs::create_directories(dir("batch") / pair);
    fs::copy_file(ref(), dir("batch") / pair / "ref.png", fs::copy_options::overwrite_existing);
    fs::copy_file(ref(), dir("batch") / pair / "mosaic.png", fs::copy_options::overwrite_existing);
  }
  ASSERT_EQ(run("eval --batch " + dir("batch").string() + " --out " + dir("batch.json").string()), 0);
  const json j = read_json(dir("batch.json"));
  EXPECT_EQ(j["count"].get<int>(), 2);
  EXPECT_EQ(j["mean"]["psnr_64"].get<double>(), 99.0);
  EXPECT_EQ(j["pairs"].size(), 2u);
}

TEST_F(Cli, AblateMatchesGenerate) {
  ASSERT_EQ(run("ablate --config " + dir("fast.cfg").string() + " --ref " + ref() + " --pool " + pool() + " --out " +
                dir("ablate").string() + " --sweep 0,500 --seeds 1,2"),
            0);
  std::ifstream csv(dir("ablate") / "ablation.csv");
  std::string header, line;
  std::getline(csv, header);
  EXPECT_EQ(header, "w0,seed,e1,e2,e3,e4,psnr,ssim");
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 4);
  ASSERT_EQ(run(fast_generate("ablate_ref", "--w0 0 --seed 2")), 0);
  EXPECT_EQ(slurp(dir("ablate") / "w0_0" / "seed_2" / "mosaic.png"), slurp(dir("ablate_ref") / "mosaic.png"));
}

TEST_F(Cli, NoiseStats) {
  ASSERT_EQ(run("noise --out " + dir("noise").string() + " --height 64 --width 64 --scale 8 --seed 4"), 0);
  const json s = read_json(dir("noise") / "stats.json");
  EXPECT_EQ(s["fine_pixels"].get<int>(), 512 * 512);
  EXPECT_LE(s["max_relative_block_sum_residual"].get<double>(), 1e-4);
  EXPECT_NEAR(s["variance_estimate"].get<double>(), 1.0, 0.02);
  EXPECT_TRUE(fs::exists(dir("noise") / "coarse.png"));
  EXPECT_TRUE(fs::exists(dir("noise") / "fine.png"));

  ASSERT_EQ(run("noise --out " + dir("noise1").string() + " --height 16 --width 16 --scale 1 --seed 4"), 0);
  EXPECT_EQ(slurp(dir("noise1") / "coarse.png"), slurp(dir("noise1") / "fine.png"));
  EXPECT_EQ(run("noise --out " + dir("noise_bad").string() + " --mode pink"), 2);
}

TEST_F(Cli, BundledAssetsWithDefaultConfig) {
  const std::string out = dir("bundled").string();
  ASSERT_EQ(run("generate --config " + std::string(MOSAICGEN_CONFIGS) + "/default.cfg --ref " +
                std::string(MOSAICGEN_ASSETS) + "/reference.png --pool " + std::string(MOSAICGEN_ASSETS) +
                "/pool --out " + out + " --label stripes"),
            0);
  for (const char* f : {"mosaic.png", "metrics.json", "manifest.json", "tiles/tile_0063.png"})
    EXPECT_TRUE(fs::exists(fs::path(out) / f)) << f;
  EXPECT_EQ(load_image(fs::path(out) / "mosaic.png").height(), 512);
}
