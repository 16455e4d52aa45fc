// Command-line front end: synthesis, baselines, training, joint optimization and reports.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "evdeblur/config.hpp"
#include "evdeblur/errors.hpp"
#include "evdeblur/io.hpp"
#include "evdeblur/pipeline.hpp"
#include "evdeblur/random.hpp"
#include "evdeblur/report.hpp"
#include "evdeblur/warp.hpp"

namespace fs = std::filesystem;
using namespace evd;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

struct Options {
  std::string config;
  std::string bundle;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<double> theta;
  std::optional<int> iters;
  std::optional<std::string> flow_source;
  std::optional<std::string> residual_source;
  std::optional<std::string> ablate;
  std::string ldi;
  std::string image;
  std::string run;
};

// Overrides go through the config parser so they get the same validation as file keys.
ExperimentConfig apply_overrides(ExperimentConfig cfg, const Options& o, const char* iters_key) {
  std::string text = "[run]\n";
  if (o.seed) text += fmt::format("seed = {}\n", *o.seed);
  if (!o.out.empty()) text += fmt::format("out = {}\n", o.out);
  if (o.theta) text += fmt::format("theta = {:.17g}\n", *o.theta);
  if (o.flow_source) text += fmt::format("flow_source = {}\n", *o.flow_source);
  if (o.residual_source) text += fmt::format("residual_source = {}\n", *o.residual_source);
  if (o.ablate) text += fmt::format("ablate = {}\n", *o.ablate);
  if (o.iters) text += fmt::format("[optim]\n{} = {}\n", iters_key, *o.iters);
  cfg = parse_config(text, cfg);
  cfg.validate();
  return cfg;
}

// Bundle commands start from the bundle's own configuration unless --config replaces it.
std::pair<DatasetBundle, ExperimentConfig> open_bundle(const Options& o, const char* iters_key) {
  if (o.bundle.empty()) throw ConfigError("--bundle is required for this command");
  auto [bundle, cfg] = read_bundle(o.bundle);
  if (!o.config.empty()) cfg = load_config(o.config);
  return {std::move(bundle), apply_overrides(cfg, o, iters_key)};
}

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// Signed maps are shown around mid-gray, scaled by their largest magnitude.
Image signed_to_image(const ScalarMap& m) {
  const double s = max_abs(m);
  Image out(m.width(), m.height(), 0.5);
  if (s > 0.0)
    for (std::size_t i = 0; i < m.size(); ++i) out[i] = 0.5 + 0.5 * m[i] / s;
  return out;
}

std::string frames_csv(const std::vector<FrameMetrics>& rows) {
  std::string out = "frame,psnr,ssim\n";
  for (std::size_t i = 0; i < rows.size(); ++i) out += fmt::format("{},{:.6f},{:.8f}\n", i, rows[i].psnr, rows[i].ssim);
  return out;
}

std::vector<std::string> write_frames(const fs::path& dir, const std::string& stem, const FrameStack& frames) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    names.push_back(fmt::format("{}_{}.pgm", stem, i));
    write_pgm(dir / names.back(), frames[i]);
  }
  return names;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> columns;
};

// Non-numeric cells ("disabled") read as NaN so plots skip them.
CsvTable read_csv(const fs::path& path) {
  std::istringstream in(read_file(path));
  CsvTable t;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (line_no == 1) {
      t.header = cells;
      t.columns.resize(cells.size());
      continue;
    }
    if (cells.size() != t.header.size())
      throw FormatError(fmt::format("{} line {}: expected {} cells, found {}", path.string(), line_no,
                                    t.header.size(), cells.size()));
    for (std::size_t c = 0; c < cells.size(); ++c) {
      char* end = nullptr;
      const double v = std::strtod(cells[c].c_str(), &end);
      t.columns[c].push_back(end != cells[c].c_str() && *end == '\0' ? v : std::numeric_limits<double>::quiet_NaN());
    }
  }
  if (t.header.empty()) throw FormatError(fmt::format("{} is empty", path.string()));
  return t;
}

const std::vector<double>& column(const CsvTable& t, const std::string& name) {
  for (std::size_t c = 0; c < t.header.size(); ++c)
    if (t.header[c] == name) return t.columns[c];
  throw FormatError(fmt::format("metrics CSV has no column '{}'", name));
}

// Loss and PSNR curves from metrics.csv plus the comparison grid, written under dir/report.
std::vector<std::string> write_report(const fs::path& dir) {
  const CsvTable t = read_csv(dir / "metrics.csv");
  const std::vector<double>& steps = column(t, "step");
  std::vector<Curve> losses{{steps, column(t, "total"), 0.0, 0}};
  for (int k = 0; k < kTermCount; ++k) {
    const std::vector<double>& y = column(t, term_name(static_cast<Term>(k)));
    const double shade = 0.25 + 0.5 * k / (kTermCount - 1);
    losses.push_back({steps, y, shade, 2 + k});
  }
  PlotStyle log_style;
  log_style.log_y = true;
  std::vector<std::string> files{"report/loss_curve.pgm", "report/psnr_curve.pgm", "report/grid.pgm"};
  write_pgm(dir / files[0], plot_curves(losses, log_style), 8);
  const std::vector<Curve> psnr_curve{{steps, column(t, "psnr"), 0.0, 0}};
  write_pgm(dir / files[1], plot_curves(psnr_curve), 8);
  std::vector<Image> tiles;
  for (const char* name : {"blur_mid.pgm", "edi_mid.pgm", "ldi_mid.pgm", "joint_mid.pgm", "gt_mid.pgm"})
    tiles.push_back(read_pgm(dir / name));
  write_pgm(dir / files[2], image_grid(tiles));
  return files;
}

int cmd_synth(const Options& o) {
  ExperimentConfig cfg = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
  cfg = apply_overrides(cfg, o, "iterations");
  const DatasetBundle bundle = synthesize(cfg);
  write_bundle(bundle, cfg, cfg.out);
  fmt::print("synthesized {} events, {} frames into {}\n", bundle.observation.events.size(), bundle.gt_frames.size(),
             cfg.out.string());
  return kExitOk;
}

int cmd_deblur_edi(const Options& o) {
  auto [bundle, cfg] = open_bundle(o, "iterations");
  const Timer timer;
  const EdiResult r = run_edi_baseline(cfg, bundle, cfg.edi_theta());
  const double elapsed = timer.seconds();
  std::vector<std::string> files = write_frames(cfg.out, "edi_frame", r.frames);
  atomic_write(cfg.out / "edi_metrics.csv", frames_csv(r.per_frame));
  files.push_back("edi_metrics.csv");
  write_manifest(cfg.out, files, "edi");
  fmt::print("theta {:.6g}\nblur mid psnr {:.4f}\nedi mid psnr {:.4f}\nedi mid ssim {:.6f}\nseconds {:.3f}\n", r.theta,
             r.blur_mid.psnr, r.mid.psnr, r.mid.ssim, elapsed);
  return kExitOk;
}

int cmd_warp(const Options& o) {
  auto [bundle, cfg] = open_bundle(o, "iterations");
  const std::vector<FlowField> flows = loss_flows(cfg, bundle);
  const auto& times = bundle.schedule.times;
  const FlowField zero(cfg.scene.width, cfg.scene.height, 1);
  std::vector<std::string> files;
  std::string csv = "interval,t_begin,t_end,flow_u,flow_v,var_unwarped,var_warped,dropped\n";
  for (std::size_t i = 0; i < flows.size(); ++i) {
    const double theta = cfg.edi_theta();
    const auto warped = warp_events(bundle.observation.events, flows[i], times[i + 1], times[i], times[i + 1], theta);
    const auto plain = warp_events(bundle.observation.events, zero, times[i + 1], times[i], times[i + 1], theta);
    const int cx = cfg.scene.width / 2;
    const int cy = cfg.scene.height / 2;
    csv += fmt::format("{},{},{},{:.8g},{:.8g},{:.10g},{:.10g},{}\n", i, times[i], times[i + 1], flows[i].u(cx, cy),
                       flows[i].v(cx, cy), plain.variance, warped.variance, warped.dropped);
    files.push_back(fmt::format("iwe_{}.pgm", i));
    write_pgm(cfg.out / files.back(), signed_to_image(warped.map));
    files.push_back(fmt::format("flow_{}.evfw", i));
    write_flow(cfg.out / files.back(), flows[i]);
  }
  atomic_write(cfg.out / "warp.csv", csv);
  files.push_back("warp.csv");
  write_manifest(cfg.out, files, "warp");
  fmt::print("{}", csv);
  return kExitOk;
}

int cmd_train_ldi(const Options& o) {
  auto [bundle, cfg] = open_bundle(o, "ldi_pretrain");
  const LdiNetwork init = o.ldi.empty() ? LdiNetwork({}, derive_seed(cfg.seed, "ldi")) : load_ldi_checkpoint(o.ldi);
  const LdiTrainingResult r = train_ldi(cfg, bundle, init, cfg.optim.ldi_pretrain);
  const FrameStack frames = ldi_frames(r.net, bundle.observation, bundle.schedule);
  std::vector<std::string> files = write_frames(cfg.out, "ldi_frame", frames);
  save_ldi_checkpoint(cfg.out / "ldi.ckpt", r.net);
  files.insert(files.end(), {"ldi.ckpt", "ldi.ckpt.arch", "ldi_training.csv"});
  atomic_write(cfg.out / "ldi_training.csv", ldi_training_csv(r.rows));
  write_manifest(cfg.out, files, "ldi");
  fmt::print("ldi mid psnr {:.4f}\n", r.rows.back().mid_psnr);
  return kExitOk;
}

int cmd_joint(const Options& o) {
  auto [bundle, cfg] = open_bundle(o, "iterations");
  std::optional<LdiNetwork> pretrained;
  if (!o.ldi.empty()) pretrained = load_ldi_checkpoint(o.ldi);
  const Timer timer;
  const JointResult r = run_joint(cfg, bundle, pretrained);
  const double elapsed = timer.seconds();
  const EdiResult edi = run_edi_baseline(cfg, bundle, cfg.edi_theta());
  const int mid = bundle.schedule.mid();

  // The last finite state is written even when the run diverged.
  std::vector<std::string> files{"metrics.csv", "trajectory.txt", "trajectory_initial.txt", "ldi.ckpt", "ldi.ckpt.arch"};
  atomic_write(cfg.out / "metrics.csv", metrics_csv(r.rows, cfg.term_mask()));
  write_trajectory(cfg.out / "trajectory.txt", r.trajectory);
  write_trajectory(cfg.out / "trajectory_initial.txt", r.initial_trajectory);
  save_ldi_checkpoint(cfg.out / "ldi.ckpt", r.net);
  if (!r.rendered.empty()) {
    const auto joint_files = write_frames(cfg.out, "joint_frame", r.rendered);
    files.insert(files.end(), joint_files.begin(), joint_files.end());
    const std::pair<const char*, const Image*> mids[] = {{"blur_mid.pgm", &bundle.observation.blur},
                                                         {"edi_mid.pgm", &edi.frames[mid]},
                                                         {"ldi_mid.pgm", &r.ldi[mid]},
                                                         {"joint_mid.pgm", &r.rendered[mid]},
                                                         {"gt_mid.pgm", &bundle.gt_frames[mid]}};
    for (const auto& [name, img] : mids) {
      write_pgm(cfg.out / name, *img);
      files.push_back(name);
    }
    const auto report = write_report(cfg.out);
    files.insert(files.end(), report.begin(), report.end());
  }
  write_manifest(cfg.out, files, "joint");

  fmt::print("blur mid psnr {:.4f}\ninitial mid psnr {:.4f}\nfinal mid psnr {:.4f}\nfinal mid ssim {:.6f}\n",
             r.blur_mid.psnr, r.initial_mid.psnr, r.final_mid.psnr, r.final_mid.ssim);
  fmt::print("ldi mid psnr {:.4f}\nedi mid psnr {:.4f}\n", r.ldi_mid.psnr, edi.mid.psnr);
  fmt::print("initial trans err {:.6g}\nfinal trans err {:.6g}\ninitial rot err {:.6g}\nfinal rot err {:.6g}\n",
             r.initial_error.trans_err, r.final_error.trans_err, r.initial_error.rot_err, r.final_error.rot_err);
  fmt::print("seconds {:.2f}\n", elapsed);
  if (r.failure) throw NumericError(*r.failure);
  return kExitOk;
}

int cmd_eval(const Options& o) {
  auto [bundle, cfg] = open_bundle(o, "iterations");
  const Image img = o.image.empty() ? bundle.observation.blur : read_pgm(o.image);
  const Image& gt = bundle.gt_frames[bundle.schedule.mid()];
  require_same_shape(img, gt, "evaluated image");
  fmt::print("psnr {:.4f}\nssim {:.6f}\n", psnr(img, gt), ssim(img, gt));
  return kExitOk;
}

int cmd_report(const Options& o) {
  const fs::path dir = o.run.empty() ? fs::path(o.out) : fs::path(o.run);
  if (dir.empty()) throw ConfigError("--run (a joint output directory) is required for report");
  for (const auto& f : write_report(dir)) fmt::print("{}\n", (dir / f).string());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Event-enhanced motion deblurring laboratory"};
  app.require_subcommand(1);
  Options o;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "experiment configuration file");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--seed", o.seed, "random seed");
    sub->add_option("--theta", o.theta, "contrast threshold for EDI (0 uses the synthesis value)");
    sub->add_option("--iters", o.iters, "iteration budget");
    sub->add_option("--flow-source", o.flow_source, "ground_truth or contrast_max");
    sub->add_option("--residual-source", o.residual_source, "oracle or none");
    sub->add_option("--ablate", o.ablate, "comma-separated loss terms to disable");
  };
  const auto add_bundle = [&](CLI::App* sub) { sub->add_option("--bundle", o.bundle, "dataset bundle directory"); };

  struct Entry {
    CLI::App* app;
    int (*run)(const Options&);
  };
  std::vector<Entry> entries;
  const auto add = [&](const char* name, const char* help, int (*run)(const Options&), bool bundle) {
    CLI::App* sub = app.add_subcommand(name, help);
    add_common(sub);
    if (bundle) add_bundle(sub);
    entries.push_back({sub, run});
    return sub;
  };

  add("synth", "synthesize a dataset bundle", cmd_synth, false);
  add("deblur-edi", "analytic EDI baseline on a bundle", cmd_deblur_edi, true);
  add("warp", "images of warped events per schedule interval", cmd_warp, true);
  add("train-ldi", "train the learnable double integral alone", cmd_train_ldi, true)
      ->add_option("--ldi", o.ldi, "initial checkpoint");
  add("joint", "joint trajectory and LDI optimization", cmd_joint, true)
      ->add_option("--ldi", o.ldi, "pretrained checkpoint (skips pretraining)");
  add("eval", "PSNR/SSIM of an image against the mid-exposure ground truth", cmd_eval, true)
      ->add_option("--image", o.image, "PGM to evaluate (default: the blurry input)");
  add("report", "plots and image grid for a joint run", cmd_report, false)->add_option("--run", o.run, "joint output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    for (const Entry& e : entries)
      if (e.app->parsed()) return e.run(o);
  } catch (const ConfigError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return kExitConfig;
  } catch (const NumericError& e) {
    fmt::print(stderr, "numeric failure: {}\n", e.what());
    return kExitNumeric;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitOther;
  }
  return kExitOther;
}
