#include "evdeblur/pipeline.hpp"

#include <cmath>
#include <numbers>

#include <fmt/format.h>
#include <json.hpp>

#include "evdeblur/io.hpp"
#include "evdeblur/optim.hpp"
#include "evdeblur/random.hpp"
#include "evdeblur/warp.hpp"

namespace evd {
namespace {

constexpr double kDegree = std::numbers::pi / 180.0;
constexpr int kTangentDims = 6;

Eigen::Vector3d random_unit(Rng& rng) {
  Eigen::Vector3d d(normal01(rng), normal01(rng), normal01(rng));
  return d / d.norm();
}

double quantize16(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 65535.0) / 65535.0; }

FrameMetrics frame_metrics(const Image& estimate, const Image& truth) { return {psnr(estimate, truth), ssim(estimate, truth)}; }

PlanarScene scene_with_texture(const ExperimentConfig& cfg, Image texture) {
  PlanarScene scene;
  scene.texture = std::move(texture);
  scene.width = cfg.scene.width;
  scene.height = cfg.scene.height;
  scene.texture_origin = {(scene.texture.width() - scene.width) / 2.0, (scene.texture.height() - scene.height) / 2.0};
  scene.plane_normal = cfg.scene.plane_normal.normalized();
  scene.plane_depth = cfg.scene.plane_depth;
  scene.intrinsics = cfg.scene.intrinsics;
  scene.intensity_floor = cfg.scene.intensity_floor;
  scene.validate();
  return scene;
}

BezierTrajectory apply_offsets(const BezierTrajectory& base, std::span<const double> offsets) {
  BezierTrajectory out = base;
  for (int j = 0; j < kControlPoints; ++j) {
    Vector6d xi;
    for (int k = 0; k < kTangentDims; ++k) xi[k] = offsets[j * kTangentDims + k];
    out.control_points[j] = base.control_points[j] * se3_exp(TangentVector::from_vector(xi));
  }
  return out;
}

// Sum over frames i in `frames` of <a_i, b_i>, where b holds only those frames.
double dot(const FrameStack& a, const FrameStack& b, std::span<const int> frames) {
  double acc = 0.0;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const Image& ai = a[frames[f]];
    for (std::size_t k = 0; k < ai.size(); ++k) acc += ai[k] * b[f][k];
  }
  return acc;
}

FrameStack render_frames(const PlanarScene& scene, const BezierTrajectory& traj, const SampleSchedule& schedule,
                         std::span<const int> frames) {
  FrameStack out;
  for (int i : frames) out.push_back(render(scene, pose_at(traj, schedule.times[i])));
  return out;
}

}  // namespace

PlanarScene make_scene(const ExperimentConfig& cfg) {
  Image texture;
  if (cfg.scene.texture == "procedural") {
    texture = make_blob_texture(cfg.scene.texture_size, cfg.scene.texture_size, derive_seed(cfg.seed, "texture"),
                                cfg.scene.blob_count);
    // Stored textures are 16-bit; quantizing here keeps in-memory and reloaded scenes identical.
    for (double& v : texture.values()) v = quantize16(v);
  } else {
    texture = read_pgm(cfg.scene.texture);
  }
  return scene_with_texture(cfg, std::move(texture));
}

BezierTrajectory make_gt_trajectory(const ExperimentConfig& cfg) {
  const ExposureWindow exposure(0, cfg.trajectory.exposure_ns);
  const double a = cfg.trajectory.acceleration;
  const double px_to_scene = cfg.scene.plane_depth / cfg.scene.intrinsics.fx;
  BezierTrajectory traj = BezierTrajectory::constant(SE3Pose::identity(), exposure);
  for (int j = 0; j < kControlPoints; ++j) {
    const double s = j / 8.0;
    const double f = (1.0 - a) * s + a * s * s;
    const Eigen::Vector3d omega = cfg.trajectory.rotation_deg * kDegree * f;
    const Eigen::Vector3d t = cfg.trajectory.translation_px * px_to_scene * f;
    const double angle = omega.norm();
    const Eigen::Quaterniond q = angle > 0.0 ? Eigen::Quaterniond(Eigen::AngleAxisd(angle, omega / angle))
                                             : Eigen::Quaterniond::Identity();
    traj.control_points[j] = SE3Pose(q, t);
  }
  return traj;
}

BezierTrajectory perturb_trajectory(const BezierTrajectory& traj, double rotation, double translation,
                                    std::uint64_t seed) {
  Rng rng(derive_seed(seed, "perturb"));
  std::vector<double> offsets(kControlPoints * kTangentDims);
  for (int j = 0; j < kControlPoints; ++j) {
    const Eigen::Vector3d w = random_unit(rng) * rotation;
    const Eigen::Vector3d v = random_unit(rng) * translation;
    for (int k = 0; k < 3; ++k) {
      offsets[j * kTangentDims + k] = w[k];
      offsets[j * kTangentDims + 3 + k] = v[k];
    }
  }
  return apply_offsets(traj, offsets);
}

SampleSchedule make_schedule(const ExperimentConfig& cfg, const ExposureWindow& exposure) {
  return SampleSchedule::uniform(exposure, cfg.schedule_n, derive_seed(cfg.seed, "draws"));
}

FrameStack render_stack(const PlanarScene& scene, const BezierTrajectory& traj, const SampleSchedule& schedule) {
  FrameStack out;
  for (Timestamp t : schedule.times) out.push_back(render(scene, pose_at(traj, t)));
  return out;
}

std::vector<FlowField> interval_flows(const PlanarScene& scene, const BezierTrajectory& traj,
                                      const SampleSchedule& schedule) {
  std::vector<FlowField> out;
  for (int i = 0; i + 1 < schedule.size(); ++i) {
    const Timestamp a = schedule.times[i], b = schedule.times[i + 1];
    out.push_back(gt_flow(scene, pose_at(traj, a), pose_at(traj, b), b - a));
  }
  return out;
}

DatasetBundle synthesize(const ExperimentConfig& cfg) {
  cfg.validate();
  DatasetBundle b;
  b.scene = make_scene(cfg);
  b.gt_trajectory = make_gt_trajectory(cfg);
  b.schedule = make_schedule(cfg, b.gt_trajectory.exposure);
  SynthConfig synth = cfg.synth;
  synth.rng_seed = derive_seed(cfg.seed, "events");
  b.observation.exposure = b.gt_trajectory.exposure;
  b.observation.blur = synth_blur(b.scene, b.gt_trajectory, cfg.blur_substeps);
  b.observation.events = synth_events(b.scene, b.gt_trajectory, synth);
  b.gt_frames = render_stack(b.scene, b.gt_trajectory, b.schedule);
  b.gt_flows = interval_flows(b.scene, b.gt_trajectory, b.schedule);
  return b;
}

void write_manifest(const std::filesystem::path& dir, const std::vector<std::string>& files, const std::string& kind) {
  nlohmann::ordered_json j;
  j["kind"] = kind;
  j["format_version"] = 1;
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  for (const std::string& f : files) {
    list.push_back({{"path", f}, {"bytes", std::filesystem::file_size(dir / f)}, {"sha256", sha256_file(dir / f)}});
  }
  j["artifacts"] = list;
  atomic_write(dir / "manifest.json", j.dump(2) + "\n");
}

void write_bundle(const DatasetBundle& bundle, const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  std::vector<std::string> files;
  auto add = [&](const std::string& name) { files.push_back(name); };
  atomic_write(dir / "config.ini", config_to_text(cfg));
  add("config.ini");
  write_pgm(dir / "texture.pgm", bundle.scene.texture);
  add("texture.pgm");
  write_pgm(dir / "blur.pgm", bundle.observation.blur);
  add("blur.pgm");
  write_events(dir / "events.evt", bundle.observation.events);
  add("events.evt");
  write_events_csv(dir / "events.csv", bundle.observation.events);
  add("events.csv");
  write_trajectory(dir / "trajectory_gt.txt", bundle.gt_trajectory);
  add("trajectory_gt.txt");
  for (std::size_t i = 0; i < bundle.gt_frames.size(); ++i) {
    const std::string name = fmt::format("gt_frame_{}.pgm", i);
    write_pgm(dir / name, bundle.gt_frames[i]);
    add(name);
  }
  for (std::size_t i = 0; i < bundle.gt_flows.size(); ++i) {
    const std::string name = fmt::format("gt_flow_{}.evfw", i);
    write_flow(dir / name, bundle.gt_flows[i]);
    add(name);
  }
  write_manifest(dir, files, "dataset");
}

std::pair<DatasetBundle, ExperimentConfig> read_bundle(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "manifest.json")) {
    throw Error(fmt::format("{} is not a dataset bundle (no manifest.json)", dir.string()));
  }
  ExperimentConfig cfg = load_config(dir / "config.ini");
  DatasetBundle b;
  b.scene = scene_with_texture(cfg, read_pgm(dir / "texture.pgm"));
  b.gt_trajectory = read_trajectory(dir / "trajectory_gt.txt");
  b.schedule = make_schedule(cfg, b.gt_trajectory.exposure);
  b.observation.exposure = b.gt_trajectory.exposure;
  b.observation.blur = read_pgm(dir / "blur.pgm");
  b.observation.events = read_events(dir / "events.evt", b.gt_trajectory.exposure);
  b.observation.validate();
  const std::pair<int, int> size{cfg.scene.width, cfg.scene.height};
  for (int i = 0; i < b.schedule.size(); ++i) b.gt_frames.push_back(read_pgm(dir / fmt::format("gt_frame_{}.pgm", i)));
  for (int i = 0; i + 1 < b.schedule.size(); ++i) {
    b.gt_flows.push_back(read_flow(dir / fmt::format("gt_flow_{}.evfw", i), size));
  }
  return {std::move(b), std::move(cfg)};
}

std::vector<FlowField> loss_flows(const ExperimentConfig& cfg, const DatasetBundle& bundle) {
  if (cfg.flow_source == FlowSource::ground_truth) return bundle.gt_flows;
  const auto grid = flow_search_grid(cfg.flow_search_px, cfg.flow_search_step);
  std::vector<FlowField> out;
  const auto& times = bundle.schedule.times;
  for (std::size_t i = 0; i + 1 < times.size(); ++i) {
    out.push_back(cm_flow_estimate(bundle.observation.events, times[i], times[i + 1], grid));
  }
  return out;
}

EdiResult run_edi_baseline(const ExperimentConfig& cfg, const DatasetBundle& bundle, double theta) {
  EdiResult r;
  r.theta = theta;
  for (int i = 0; i < bundle.schedule.size(); ++i) {
    r.frames.push_back(edi_deblur(bundle.observation, bundle.schedule.times[i], theta, cfg.edi_substeps));
    r.per_frame.push_back(frame_metrics(r.frames.back(), bundle.gt_frames[i]));
  }
  r.mid = r.per_frame[bundle.schedule.mid()];
  r.blur_mid = frame_metrics(bundle.observation.blur, bundle.gt_frames[bundle.schedule.mid()]);
  return r;
}

LdiTrainingResult train_ldi(const ExperimentConfig& cfg, const DatasetBundle& bundle, LdiNetwork net, int steps) {
  const SampleSchedule& schedule = bundle.schedule;
  const EventEvidence evidence(bundle.observation.events, schedule, 1.0);
  LdiFrameModel model(net.architecture(), bundle.observation, schedule, Precision::single);
  SampleSchedule draws_schedule = schedule;
  draws_schedule.rng_seed = derive_seed(cfg.seed, "ldi-pretrain-draws");
  ParamVector params;
  params.add_segment("ldi", net.params(), cfg.optim.lr_ldi, GradientMode::reverse);
  AdamState adam;
  const AdamConfig adam_cfg{cfg.optim.beta1, cfg.optim.beta2, cfg.optim.epsilon};
  LdiTrainingResult result{net, {}};
  for (int step = 0; step <= steps; ++step) {
    const auto draws = draw_reference_indices(draws_schedule, static_cast<std::uint64_t>(step));
    const FrameStack frames = model.forward(params.values());
    FrameStack g;
    const LdiLoss loss = ldi_loss_from_frames(frames, bundle.observation.blur, evidence, draws, cfg.weights,
                                              bundle.scene.intensity_floor, step < steps ? &g : nullptr);
    result.rows.push_back({step, loss, psnr(frames[schedule.mid()], bundle.gt_frames[schedule.mid()])});
    if (!std::isfinite(loss.total)) throw NumericError(fmt::format("LDI loss is not finite at step {}", step));
    if (step == steps) break;
    const std::vector<double> grads = model.backward(g);
    adam_step(params, grads, adam, adam_cfg);
  }
  result.net.set_params(params.values());
  return result;
}

TrajectoryError trajectory_error(const BezierTrajectory& estimate, const BezierTrajectory& truth,
                                 const SampleSchedule& schedule) {
  TrajectoryError e;
  for (Timestamp t : schedule.times) {
    const PoseError d = pose_distance(pose_at(estimate, t), pose_at(truth, t));
    e.rot_err += d.rot_err;
    e.trans_err += d.trans_err;
  }
  e.rot_err /= schedule.size();
  e.trans_err /= schedule.size();
  return e;
}

JointResult run_joint(const ExperimentConfig& cfg, const DatasetBundle& bundle, std::optional<LdiNetwork> pretrained) {
  cfg.validate();
  const PlanarScene& scene = bundle.scene;
  const SampleSchedule& schedule = bundle.schedule;
  const int mid = schedule.mid();
  const double floor = scene.intensity_floor;

  const std::vector<FlowField> flows = loss_flows(cfg, bundle);
  const EventEvidence evidence(bundle.observation.events, schedule, 1.0, flows);
  const std::vector<WarpedChangePredictor> predictors = make_predictors(flows, schedule, floor);
  const BlurSynthesizer synthesizer(flows, cfg.weights.upsample);
  std::optional<std::vector<ScalarMap>> residuals;
  if (cfg.residual_source == ResidualSource::oracle) residuals = residual_oracle(bundle.gt_frames);
  const TermMask mask = cfg.term_mask();
  const bool need_ldi = mask[Term::ldi_blur] || mask[Term::ldi_ev] || mask[Term::joint];
  const bool need_render_grad = mask[Term::blur_gs] || mask[Term::ev_gs] || mask[Term::ev_w] ||
                                (mask[Term::res] && residuals) || mask[Term::joint];

  JointResult result;
  result.net = pretrained ? *pretrained : LdiNetwork({}, derive_seed(cfg.seed, "ldi"));
  if (!pretrained && cfg.optim.ldi_pretrain > 0) {
    result.net = train_ldi(cfg, bundle, result.net, cfg.optim.ldi_pretrain).net;
  }
  result.initial_trajectory = perturb_trajectory(bundle.gt_trajectory, cfg.optim.perturb_rotation_deg * kDegree,
                                                 cfg.optim.perturb_translation_px * scene.plane_depth /
                                                     scene.intrinsics.fx,
                                                 cfg.seed);
  std::optional<LdiFrameModel> model;
  if (need_ldi) model.emplace(result.net.architecture(), bundle.observation, schedule, Precision::single);

  ParamVector params;
  const std::vector<double> zeros(kControlPoints * kTangentDims, 0.0);
  params.add_segment("trajectory", zeros, cfg.optim.lr_trajectory, GradientMode::finite_difference);
  params.add_segment("ldi", result.net.params(), need_ldi ? cfg.optim.lr_ldi : 0.0, GradientMode::reverse);
  const Segment traj_seg = params.segment("trajectory");
  const Segment ldi_seg = params.segment("ldi");
  AdamState adam;
  const AdamConfig adam_cfg{cfg.optim.beta1, cfg.optim.beta2, cfg.optim.epsilon};

  SampleSchedule ldi_draws = schedule;
  ldi_draws.rng_seed = derive_seed(cfg.seed, "ldi-draws");
  ObjectiveContext ctx;
  ctx.evidence = &evidence;
  ctx.predictors = predictors;
  ctx.synthesizer = &synthesizer;
  ctx.blur = &bundle.observation.blur;
  ctx.residuals = residuals ? &*residuals : nullptr;
  ctx.weights = cfg.weights;
  ctx.mask = mask;
  ctx.intensity_floor = floor;

  result.blur_mid = frame_metrics(bundle.observation.blur, bundle.gt_frames[mid]);
  result.initial_error = trajectory_error(result.initial_trajectory, bundle.gt_trajectory, schedule);
  FrameStack ldi_frames_now;
  const double h = kFiniteDifferenceStep;

  for (int step = 0; step <= cfg.optim.iterations; ++step) {
    const auto draws_gs = draw_reference_indices(schedule, static_cast<std::uint64_t>(step));
    const auto draws_ldi = draw_reference_indices(ldi_draws, static_cast<std::uint64_t>(step));
    ctx.draws_gs = draws_gs;
    ctx.draws_ldi = draws_ldi;
    const auto offsets = params.values().subspan(traj_seg.offset, traj_seg.size);
    const BezierTrajectory traj = apply_offsets(result.initial_trajectory, offsets);
    const FrameStack rendered = render_stack(scene, traj, schedule);
    if (model) ldi_frames_now = model->forward(params.values().subspan(ldi_seg.offset, ldi_seg.size));
    const bool last = step == cfg.optim.iterations;
    ObjectiveGradient g;
    const LossBreakdown terms = total_objective(rendered, ldi_frames_now, ctx, last ? nullptr : &g);

    const TrajectoryError err = trajectory_error(traj, bundle.gt_trajectory, schedule);
    const FrameMetrics m = frame_metrics(rendered[mid], bundle.gt_frames[mid]);
    result.rows.push_back({step, terms, m.psnr, m.ssim, err.rot_err, err.trans_err});
    if (step == 0) result.initial_mid = m;
    if (!std::isfinite(terms.total)) {
      result.failure = fmt::format("objective is not finite at step {}", step);
      break;
    }
    result.trajectory = traj;
    result.rendered = rendered;
    result.ldi = ldi_frames_now;
    result.net.set_params(params.values().subspan(ldi_seg.offset, ldi_seg.size));
    result.final_error = err;
    result.final_mid = m;
    if (last) break;

    const bool move_traj = !cfg.optim.alternate || step % 2 == 0;
    const bool move_ldi = !cfg.optim.alternate || step % 2 == 1;
    std::vector<double> grads(params.size(), 0.0);
    if (model && move_ldi) {
      const std::vector<double> gl = model->backward(g.ldi);
      std::copy(gl.begin(), gl.end(), grads.begin() + static_cast<std::ptrdiff_t>(ldi_seg.offset));
    }
    if (need_render_grad && move_traj && cfg.optim.lr_trajectory > 0.0) {
      std::vector<double> probe(offsets.begin(), offsets.end());
      // The end frames depend only on the end control points.
      std::vector<int> interior, first, final;
      for (int i = 1; i + 1 < schedule.size(); ++i) interior.push_back(i);
      first = interior;
      first.insert(first.begin(), 0);
      final = interior;
      final.push_back(schedule.size() - 1);
      for (std::size_t k = 0; k < probe.size(); ++k) {
        const int j = static_cast<int>(k) / kTangentDims;
        const std::vector<int>& frames = j == 0 ? first : (j == kControlPoints - 1 ? final : interior);
        const double keep = probe[k];
        probe[k] = keep + h;
        const FrameStack plus = render_frames(scene, apply_offsets(result.initial_trajectory, probe), schedule, frames);
        probe[k] = keep - h;
        const FrameStack minus = render_frames(scene, apply_offsets(result.initial_trajectory, probe), schedule, frames);
        probe[k] = keep;
        grads[traj_seg.offset + k] = (dot(g.rendered, plus, frames) - dot(g.rendered, minus, frames)) / (2.0 * h);
      }
    }
    adam_step(params, grads, adam, adam_cfg);
  }
  result.ldi_mid = result.ldi.empty() ? FrameMetrics{} : frame_metrics(result.ldi[mid], bundle.gt_frames[mid]);
  return result;
}

std::string metrics_csv(const std::vector<MetricsRow>& rows, const TermMask& mask) {
  std::string out = "step";
  for (int t = 0; t < kTermCount; ++t) out += fmt::format(",{}", term_name(static_cast<Term>(t)));
  out += ",total,psnr,ssim,rot_err,trans_err\n";
  for (const MetricsRow& r : rows) {
    out += fmt::format("{}", r.step);
    for (int t = 0; t < kTermCount; ++t) {
      const auto term = static_cast<Term>(t);
      if (mask[term]) out += fmt::format(",{:.10g}", r.terms[term]);
      else out += ",disabled";
    }
    out += fmt::format(",{:.10g},{:.6f},{:.8f},{:.8g},{:.8g}\n", r.terms.total, r.psnr, r.ssim, r.rot_err, r.trans_err);
  }
  return out;
}

std::string ldi_training_csv(const std::vector<LdiTrainingRow>& rows) {
  std::string out = "step,ldi_blur,ldi_ev,total,mid_psnr\n";
  for (const LdiTrainingRow& r : rows) {
    out += fmt::format("{},{:.10g},{:.10g},{:.10g},{:.6f}\n", r.step, r.loss.blur, r.loss.ev, r.loss.total, r.mid_psnr);
  }
  return out;
}

}  // namespace evd
