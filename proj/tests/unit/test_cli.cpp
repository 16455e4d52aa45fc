#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "evdeblur/io.hpp"
#include "evdeblur/report.hpp"
#include "fixtures.hpp"

namespace evd::testing {
namespace {

struct Outcome {
  int code = -1;
  std::string output;
};

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("evdeblur_unit_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Outcome cli(const std::string& args, const fs::path& dir) {
  const fs::path log = dir / "cli.log";
  const std::string cmd = std::string("\"") + EVDEBLUR_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, read_file(log)};
}

// A 16x16 bundle keeps every subcommand fast.
fs::path small_bundle(const fs::path& dir) {
  atomic_write(dir / "small.ini", config_to_text(small_config()));
  const Outcome o = cli("synth --config \"" + (dir / "small.ini").string() + "\" --out \"" + (dir / "b").string() + "\"",
                        dir);
  EXPECT_EQ(o.code, 0) << o.output;
  return dir / "b";
}

TEST(Cli, SynthThenEvalPrintsFinitePsnr) {
  const fs::path dir = scratch_dir("cli_eval");
  const fs::path b = small_bundle(dir);
  const Outcome o = cli("eval --bundle \"" + b.string() + "\"", dir);
  ASSERT_EQ(o.code, 0) << o.output;
  const auto pos = o.output.find("psnr ");
  ASSERT_NE(pos, std::string::npos) << o.output;
  EXPECT_TRUE(std::isfinite(std::stod(o.output.substr(pos + 5))));
}

TEST(Cli, UnknownConfigKeyExitsWithTwo) {
  const fs::path dir = scratch_dir("cli_badkey");
  atomic_write(dir / "bad.ini", "[scene]\nbogus = 1\n");
  const Outcome o = cli("synth --config \"" + (dir / "bad.ini").string() + "\" --out \"" + (dir / "b").string() + "\"",
                        dir);
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.output.find("scene.bogus"), std::string::npos) << o.output;
  EXPECT_FALSE(fs::exists(dir / "b" / "manifest.json"));
}

TEST(Cli, BadFlagValueExitsWithTwo) {
  const fs::path dir = scratch_dir("cli_badflag");
  EXPECT_EQ(cli("synth --seed nope --out \"" + (dir / "b").string() + "\"", dir).code, 2);
  EXPECT_EQ(cli("synth --ablate nothing --out \"" + (dir / "b").string() + "\"", dir).code, 2);
  EXPECT_EQ(cli("no-such-command", dir).code, 2);
}

TEST(Cli, JointWritesArtifactsAndAblationColumn) {
  const fs::path dir = scratch_dir("cli_joint");
  const fs::path b = small_bundle(dir);
  const fs::path ldi = dir / "ldi";
  ASSERT_EQ(cli("train-ldi --bundle \"" + b.string() + "\" --iters 5 --out \"" + ldi.string() + "\"", dir).code, 0);
  const fs::path out = dir / "joint";
  const Outcome o = cli("joint --bundle \"" + b.string() + "\" --iters 3 --ablate=ev_w --ldi \"" +
                            (ldi / "ldi.ckpt").string() + "\" --out \"" + out.string() + "\"",
                        dir);
  ASSERT_EQ(o.code, 0) << o.output;
  for (const char* f : {"manifest.json", "metrics.csv", "ldi.ckpt", "trajectory.txt", "report/loss_curve.pgm",
                        "report/psnr_curve.pgm", "report/grid.pgm"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
  const std::string csv = read_file(out / "metrics.csv");
  EXPECT_NE(csv.find("ev_w"), std::string::npos);
  EXPECT_NE(csv.find(",disabled,"), std::string::npos);
  fs::remove_all(out / "report");
  ASSERT_EQ(cli("report --run \"" + out.string() + "\"", dir).code, 0);
  EXPECT_TRUE(fs::exists(out / "report" / "grid.pgm"));
}

TEST(Cli, EdiAndWarpProduceManifests) {
  const fs::path dir = scratch_dir("cli_edi_warp");
  const fs::path b = small_bundle(dir);
  ASSERT_EQ(cli("deblur-edi --bundle \"" + b.string() + "\" --out \"" + (dir / "edi").string() + "\"", dir).code, 0);
  EXPECT_TRUE(fs::exists(dir / "edi" / "edi_metrics.csv"));
  ASSERT_EQ(cli("warp --bundle \"" + b.string() + "\" --out \"" + (dir / "warp").string() + "\"", dir).code, 0);
  EXPECT_TRUE(fs::exists(dir / "warp" / "warp.csv"));
  EXPECT_TRUE(fs::exists(dir / "warp" / "manifest.json"));
}

TEST(Report, PlotHasRequestedSizeAndDrawsCurves) {
  const std::vector<double> x{0, 1, 2, 3}, y{1.0, 0.5, 0.25, 0.125};
  const std::vector<Curve> curves{{x, y, 0.0, 0}};
  PlotStyle style;
  style.log_y = true;
  const Image img = plot_curves(curves, style);
  EXPECT_EQ(img.width(), style.width);
  EXPECT_EQ(img.height(), style.height);
  int dark = 0;
  for (double v : img.values()) dark += v < 0.5;
  EXPECT_GT(dark, 0);
  style.width = 10;
  EXPECT_THROW(plot_curves(curves, style), ParameterError);
}

TEST(Report, GridPlacesTilesSideBySide) {
  const std::vector<Image> tiles{Image(4, 3, 0.2), Image(5, 3, 0.7)};
  const Image g = image_grid(tiles, 2, 1.0);
  EXPECT_EQ(g.width(), 11);
  EXPECT_EQ(g.height(), 3);
  EXPECT_EQ(g(0, 0), 0.2);
  EXPECT_EQ(g(4, 1), 1.0);
  EXPECT_EQ(g(6, 2), 0.7);
  const std::vector<Image> mismatched{Image(4, 3), Image(4, 4)};
  EXPECT_THROW(image_grid(mismatched), DimensionError);
}

}  // namespace
}  // namespace evd::testing
