#include "evdeblur/config.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "evdeblur/io.hpp"

namespace evd {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

struct Field {
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw ConfigError(fmt::format("config key '{}': cannot parse '{}' as {}", key, value, expected));
}

template <class T>
T number(const std::string& key, const std::string& value) {
  T v{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size()) bad_value(key, value, "a number");
  return v;
}

bool boolean(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  bad_value(key, value, "a boolean");
}

Eigen::Vector3d vec3(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  std::string a, b, c, extra;
  if (!(in >> a >> b >> c) || (in >> extra)) bad_value(key, value, "three numbers");
  return {number<double>(key, a), number<double>(key, b), number<double>(key, c)};
}

std::string fmt_double(double v) { return fmt::format("{:.17g}", v); }
std::string fmt_vec3(const Eigen::Vector3d& v) {
  return fmt::format("{} {} {}", fmt_double(v.x()), fmt_double(v.y()), fmt_double(v.z()));
}

#define EVD_DOUBLE(name, member) \
  {name, {[](ExperimentConfig& c, const std::string& v) { c.member = number<double>(name, v); }, \
          [](const ExperimentConfig& c) { return fmt_double(c.member); }}}
#define EVD_INT(name, member) \
  {name, {[](ExperimentConfig& c, const std::string& v) { c.member = number<int>(name, v); }, \
          [](const ExperimentConfig& c) { return fmt::format("{}", c.member); }}}
#define EVD_VEC3(name, member) \
  {name, {[](ExperimentConfig& c, const std::string& v) { c.member = vec3(name, v); }, \
          [](const ExperimentConfig& c) { return fmt_vec3(c.member); }}}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
      {"scene.texture", {[](ExperimentConfig& c, const std::string& v) { c.scene.texture = v; },
                         [](const ExperimentConfig& c) { return c.scene.texture; }}},
      EVD_INT("scene.texture_size", scene.texture_size),
      EVD_INT("scene.blob_count", scene.blob_count),
      EVD_INT("scene.width", scene.width),
      EVD_INT("scene.height", scene.height),
      EVD_DOUBLE("scene.fx", scene.intrinsics.fx),
      EVD_DOUBLE("scene.fy", scene.intrinsics.fy),
      EVD_DOUBLE("scene.cx", scene.intrinsics.cx),
      EVD_DOUBLE("scene.cy", scene.intrinsics.cy),
      EVD_VEC3("scene.plane_normal", scene.plane_normal),
      EVD_DOUBLE("scene.plane_depth", scene.plane_depth),
      EVD_DOUBLE("scene.intensity_floor", scene.intensity_floor),
      {"trajectory.exposure_ns",
       {[](ExperimentConfig& c, const std::string& v) { c.trajectory.exposure_ns = number<Timestamp>("trajectory.exposure_ns", v); },
        [](const ExperimentConfig& c) { return fmt::format("{}", c.trajectory.exposure_ns); }}},
      EVD_VEC3("trajectory.translation_px", trajectory.translation_px),
      EVD_VEC3("trajectory.rotation_deg", trajectory.rotation_deg),
      EVD_DOUBLE("trajectory.acceleration", trajectory.acceleration),
      EVD_DOUBLE("synth.theta_pos", synth.theta_pos),
      EVD_DOUBLE("synth.theta_neg", synth.theta_neg),
      {"synth.refractory_ns",
       {[](ExperimentConfig& c, const std::string& v) { c.synth.refractory_ns = number<Timestamp>("synth.refractory_ns", v); },
        [](const ExperimentConfig& c) { return fmt::format("{}", c.synth.refractory_ns); }}},
      EVD_DOUBLE("synth.noise_rate", synth.noise_rate),
      EVD_INT("synth.substep_count", synth.substep_count),
      EVD_INT("synth.blur_substeps", blur_substeps),
      EVD_INT("schedule.n", schedule_n),
      EVD_DOUBLE("loss.lambda", weights.lambda),
      EVD_DOUBLE("loss.lambda_ssim", weights.lambda_ssim),
      EVD_INT("loss.upsample", weights.upsample),
      EVD_INT("optim.iterations", optim.iterations),
      EVD_INT("optim.ldi_pretrain", optim.ldi_pretrain),
      EVD_DOUBLE("optim.lr_trajectory", optim.lr_trajectory),
      EVD_DOUBLE("optim.lr_ldi", optim.lr_ldi),
      EVD_DOUBLE("optim.beta1", optim.beta1),
      EVD_DOUBLE("optim.beta2", optim.beta2),
      EVD_DOUBLE("optim.epsilon", optim.epsilon),
      EVD_DOUBLE("optim.perturb_rotation_deg", optim.perturb_rotation_deg),
      EVD_DOUBLE("optim.perturb_translation_px", optim.perturb_translation_px),
      {"optim.alternate", {[](ExperimentConfig& c, const std::string& v) { c.optim.alternate = boolean("optim.alternate", v); },
                           [](const ExperimentConfig& c) { return std::string(c.optim.alternate ? "true" : "false"); }}},
      {"run.seed", {[](ExperimentConfig& c, const std::string& v) { c.seed = number<std::uint64_t>("run.seed", v); },
                    [](const ExperimentConfig& c) { return fmt::format("{}", c.seed); }}},
      {"run.out", {[](ExperimentConfig& c, const std::string& v) { c.out = v; },
                   [](const ExperimentConfig& c) { return c.out.string(); }}},
      {"run.flow_source",
       {[](ExperimentConfig& c, const std::string& v) {
          if (v == "ground_truth") c.flow_source = FlowSource::ground_truth;
          else if (v == "contrast_max") c.flow_source = FlowSource::contrast_max;
          else bad_value("run.flow_source", v, "ground_truth or contrast_max");
        },
        [](const ExperimentConfig& c) { return std::string(to_string(c.flow_source)); }}},
      {"run.residual_source",
       {[](ExperimentConfig& c, const std::string& v) {
          if (v == "oracle") c.residual_source = ResidualSource::oracle;
          else if (v == "none") c.residual_source = ResidualSource::none;
          else bad_value("run.residual_source", v, "oracle or none");
        },
        [](const ExperimentConfig& c) { return std::string(to_string(c.residual_source)); }}},
      {"run.ablate", {[](ExperimentConfig& c, const std::string& v) { c.ablate = parse_term_list(v); },
                      [](const ExperimentConfig& c) {
                        std::string s;
                        for (Term t : c.ablate) s += (s.empty() ? "" : ",") + std::string(term_name(t));
                        return s;
                      }}},
      EVD_DOUBLE("run.theta", theta),
      EVD_INT("run.edi_substeps", edi_substeps),
      EVD_DOUBLE("run.flow_search_px", flow_search_px),
      EVD_DOUBLE("run.flow_search_step", flow_search_step),
  };
  return table;
}

#undef EVD_DOUBLE
#undef EVD_INT
#undef EVD_VEC3

}  // namespace

const char* to_string(FlowSource s) { return s == FlowSource::ground_truth ? "ground_truth" : "contrast_max"; }
const char* to_string(ResidualSource s) { return s == ResidualSource::oracle ? "oracle" : "none"; }

TermMask ExperimentConfig::term_mask() const {
  TermMask m;
  for (Term t : ablate) m.set(t, false);
  if (residual_source == ResidualSource::none) m.set(Term::res, false);
  return m;
}

void ExperimentConfig::validate() const {
  try {
    synth.validate();
    weights.validate();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (scene.width < 4 || scene.height < 4) throw ConfigError("scene size must be at least 4x4");
  if (scene.texture_size < 1 || scene.blob_count < 0) throw ConfigError("invalid procedural texture settings");
  if (!(scene.plane_depth > 0.0)) throw ConfigError("scene.plane_depth must be positive");
  if (!(scene.intensity_floor > 0.0)) throw ConfigError("scene.intensity_floor must be positive");
  if (trajectory.exposure_ns <= 0) throw ConfigError("trajectory.exposure_ns must be positive");
  if (blur_substeps < 2) throw ConfigError("synth.blur_substeps must be at least 2");
  if (schedule_n < 1) throw ConfigError("schedule.n must be at least 1");
  if (optim.iterations < 0 || optim.ldi_pretrain < 0) throw ConfigError("iteration counts must be non-negative");
  if (!(optim.lr_trajectory >= 0.0) || !(optim.lr_ldi >= 0.0)) throw ConfigError("learning rates must be non-negative");
  if (theta < 0.0) throw ConfigError("run.theta must be positive (or 0 for the synthesis threshold)");
  if (edi_substeps < 2) throw ConfigError("run.edi_substeps must be at least 2");
  if (!(flow_search_step > 0.0) || flow_search_px < 0.0) throw ConfigError("invalid flow search grid");
}

std::vector<Term> parse_term_list(std::string_view list) {
  std::vector<Term> out;
  std::size_t start = 0;
  while (start <= list.size()) {
    const auto p = list.find(',', start);
    const std::string name = trim(list.substr(start, p == std::string_view::npos ? std::string_view::npos : p - start));
    if (!name.empty()) out.push_back(parse_term(name));
    if (p == std::string_view::npos) break;
    start = p + 1;
  }
  return out;
}

ExperimentConfig parse_config(std::string_view text, ExperimentConfig base) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::string section;
  std::size_t lineno = 0;
  std::map<std::string, std::size_t> seen;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    const std::string t = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError(fmt::format("config line {}: malformed section header", lineno));
      section = trim(std::string_view(t).substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(fmt::format("config line {}: expected 'key = value'", lineno));
    const std::string key = trim(std::string_view(t).substr(0, eq));
    const std::string value = trim(std::string_view(t).substr(eq + 1));
    const std::string full = section.empty() ? key : section + "." + key;
    const auto it = fields().find(full);
    if (it == fields().end()) throw ConfigError(fmt::format("config line {}: unknown key '{}'", lineno, full));
    if (seen.count(full)) {
      throw ConfigError(fmt::format("config line {}: key '{}' repeats line {}", lineno, full, seen[full]));
    }
    seen[full] = lineno;
    it->second.set(base, value);
  }
  base.validate();
  return base;
}

ExperimentConfig load_config(const std::filesystem::path& path) { return parse_config(read_file(path)); }

std::string config_to_text(const ExperimentConfig& cfg) {
  std::string out;
  std::string current;
  for (const auto& [name, field] : fields()) {
    const auto dot = name.find('.');
    const std::string section = name.substr(0, dot);
    if (section != current) {
      out += fmt::format("{}[{}]\n", out.empty() ? "" : "\n", section);
      current = section;
    }
    out += fmt::format("{} = {}\n", name.substr(dot + 1), field.get(cfg));
  }
  return out;
}

}  // namespace evd
