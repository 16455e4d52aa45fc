#include "evdeblur/io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <openssl/evp.h>

namespace evd {
namespace {

void put_u16(std::string& out, std::uint16_t v) {
  for (int i = 0; i < 2; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_f32(std::string& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}
void put_f64(std::string& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  put_u64(out, bits);
}

/// Little-endian cursor that reports the offset of any short read.
class Reader {
 public:
  Reader(std::string_view bytes, const char* what) : bytes_(bytes), what_(what) {}
  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::uint64_t uint(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  float f32() {
    const auto bits = static_cast<std::uint32_t>(uint(4));
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
  }
  double f64() {
    const std::uint64_t bits = uint(8);
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
  }
  void magic(std::string_view m) {
    need(m.size());
    if (bytes_.substr(pos_, m.size()) != m) {
      throw FormatError(fmt::format("{}: bad magic at byte offset {}, expected '{}'", what_, pos_, m));
    }
    pos_ += m.size();
  }
  void need(std::size_t n) const {
    if (remaining() < n) {
      throw FormatError(fmt::format("{}: truncated at byte offset {} (need {} more bytes)", what_, bytes_.size(), n));
    }
  }

 private:
  std::string_view bytes_;
  const char* what_;
  std::size_t pos_ = 0;
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_number(std::string_view s, std::size_t line, const char* what) {
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw FormatError(fmt::format("{}: line {}: cannot parse '{}'", what, line, s));
  }
  return v;
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto p = s.find(sep, start);
    out.push_back(trim(s.substr(start, p == std::string_view::npos ? std::string_view::npos : p - start)));
    if (p == std::string_view::npos) break;
    start = p + 1;
  }
  return out;
}

std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream in{std::string(s)};
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

EventStream make_stream(int width, int height, std::vector<Event> events, std::optional<ExposureWindow> coverage) {
  Timestamp lo = 0, hi = 0;
  if (coverage) {
    lo = coverage->t_open;
    hi = coverage->t_close;
  } else if (!events.empty()) {
    lo = events.front().t;
    hi = events.back().t;
  }
  return EventStream(width, height, lo, hi, std::move(events));
}

}  // namespace

void atomic_write(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(fmt::format("cannot open {} for writing", tmp.string()));
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw Error(fmt::format("failed writing {}", tmp.string()));
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot open {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string sha256_file(const fs::path& path) {
  const std::string data = read_file(path);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 computation failed");
  }
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

std::string encode_events(const EventStream& stream) {
  std::string out;
  out.reserve(kEventHeaderBytes + kEventRecordBytes * stream.size());
  out += "EVT1";
  put_u32(out, static_cast<std::uint32_t>(stream.width()));
  put_u32(out, static_cast<std::uint32_t>(stream.height()));
  put_u64(out, stream.size());
  for (const Event& e : stream.events()) {
    if (e.t < 0) throw FormatError("event file cannot store negative timestamps");
    put_u64(out, static_cast<std::uint64_t>(e.t));
    put_u16(out, static_cast<std::uint16_t>(e.x));
    put_u16(out, static_cast<std::uint16_t>(e.y));
    out.push_back(static_cast<char>(static_cast<std::int8_t>(e.p)));
    out.append(3, '\0');
  }
  return out;
}

EventStream decode_events(std::string_view bytes, std::optional<ExposureWindow> coverage) {
  Reader r(bytes, "event file");
  r.magic("EVT1");
  const auto width = static_cast<int>(r.uint(4));
  const auto height = static_cast<int>(r.uint(4));
  const std::uint64_t count = r.uint(8);
  if (width <= 0 || height <= 0) throw FormatError("event file: sensor size must be positive (byte offset 4)");
  if (r.remaining() != count * kEventRecordBytes) {
    const std::size_t complete = r.remaining() / kEventRecordBytes;
    if (complete < count) {
      throw FormatError(fmt::format("event file: truncated record at byte offset {}",
                                    kEventHeaderBytes + complete * kEventRecordBytes));
    }
    throw FormatError(fmt::format("event file: trailing bytes at byte offset {}",
                                  kEventHeaderBytes + count * kEventRecordBytes));
  }
  std::vector<Event> events;
  events.reserve(count);
  for (std::uint64_t k = 0; k < count; ++k) {
    const std::size_t at = r.offset();
    Event e;
    const std::uint64_t t = r.uint(8);
    e.x = static_cast<int>(r.uint(2));
    e.y = static_cast<int>(r.uint(2));
    e.p = static_cast<std::int8_t>(static_cast<std::uint8_t>(r.uint(1)));
    r.uint(3);
    if (t > static_cast<std::uint64_t>(INT64_MAX)) throw FormatError(fmt::format("event file: timestamp overflow at byte offset {}", at));
    e.t = static_cast<Timestamp>(t);
    if (e.x >= width || e.y >= height) {
      throw FormatError(fmt::format("event file: pixel ({}, {}) outside the sensor at byte offset {}", e.x, e.y, at));
    }
    if (e.p != 1 && e.p != -1) throw FormatError(fmt::format("event file: polarity {} at byte offset {}", e.p, at));
    if (!events.empty() && e.t < events.back().t) {
      throw FormatError(fmt::format("event file: unsorted timestamp at byte offset {}", at));
    }
    events.push_back(e);
  }
  return make_stream(width, height, std::move(events), coverage);
}

void write_events(const fs::path& path, const EventStream& stream) { atomic_write(path, encode_events(stream)); }

EventStream read_events(const fs::path& path, std::optional<ExposureWindow> coverage) {
  return decode_events(read_file(path), coverage);
}

void write_events_csv(const fs::path& path, const EventStream& stream) {
  std::string out = "t_ns,x,y,p\n";
  for (const Event& e : stream.events()) out += fmt::format("{},{},{},{}\n", e.t, e.x, e.y, e.p);
  atomic_write(path, out);
}

EventStream read_events_csv(const fs::path& path, int width, int height, std::optional<ExposureWindow> coverage) {
  const std::string text = read_file(path);
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::vector<Event> events;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (lineno == 1) {
      if (t != "t_ns,x,y,p") throw FormatError("event CSV: line 1: expected header 't_ns,x,y,p'");
      continue;
    }
    if (t.empty()) continue;
    const auto f = split(t, ',');
    if (f.size() != 4) throw FormatError(fmt::format("event CSV: line {}: expected 4 fields", lineno));
    Event e{parse_number<Timestamp>(f[0], lineno, "event CSV"), parse_number<int>(f[1], lineno, "event CSV"),
            parse_number<int>(f[2], lineno, "event CSV"), parse_number<int>(f[3], lineno, "event CSV")};
    if (e.t < 0) throw FormatError(fmt::format("event CSV: line {}: negative timestamp", lineno));
    if (e.x < 0 || e.y < 0 || e.x >= width || e.y >= height) {
      throw FormatError(fmt::format("event CSV: line {}: pixel outside the sensor", lineno));
    }
    if (e.p != 1 && e.p != -1) throw FormatError(fmt::format("event CSV: line {}: polarity must be +1 or -1", lineno));
    if (!events.empty() && e.t < events.back().t) {
      throw FormatError(fmt::format("event CSV: line {}: unsorted timestamp", lineno));
    }
    events.push_back(e);
  }
  if (lineno == 0) throw FormatError("event CSV: line 1: missing header");
  return make_stream(width, height, std::move(events), coverage);
}

std::string encode_pgm(const Image& image, int bits) {
  if (bits != 8 && bits != 16) throw ParameterError("PGM depth must be 8 or 16 bits");
  const int maxval = bits == 8 ? 255 : 65535;
  std::string out = fmt::format("P5\n{} {}\n{}\n", image.width(), image.height(), maxval);
  for (std::size_t i = 0; i < image.size(); ++i) {
    const double v = std::isfinite(image[i]) ? std::clamp(image[i], 0.0, 1.0) : 0.0;
    const auto q = static_cast<unsigned>(std::lround(v * maxval));
    if (bits == 16) out.push_back(static_cast<char>(q >> 8));
    out.push_back(static_cast<char>(q & 0xff));
  }
  return out;
}

Image decode_pgm(std::string_view bytes) {
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (start == pos) throw FormatError(fmt::format("PGM: malformed header at byte offset {}", start));
    return std::string(bytes.substr(start, pos - start));
  };
  if (token() != "P5") throw FormatError("PGM: bad magic at byte offset 0, expected 'P5'");
  auto header_int = [&]() {
    const std::size_t at = pos;
    const std::string t = token();
    int v = 0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size() || v <= 0) {
      throw FormatError(fmt::format("PGM: malformed header value '{}' at byte offset {}", t, at));
    }
    return v;
  };
  const int width = header_int();
  const int height = header_int();
  const int maxval = header_int();
  if (maxval > 65535) throw FormatError("PGM: max value above 65535");
  ++pos;  // single whitespace before the raster
  const int bytes_per = maxval > 255 ? 2 : 1;
  const std::size_t need = static_cast<std::size_t>(width) * height * bytes_per;
  if (bytes.size() < pos + need) throw FormatError(fmt::format("PGM: truncated raster at byte offset {}", bytes.size()));
  Image img(width, height);
  for (std::size_t i = 0; i < img.size(); ++i) {
    unsigned v = static_cast<unsigned char>(bytes[pos + i * bytes_per]);
    if (bytes_per == 2) v = (v << 8) | static_cast<unsigned char>(bytes[pos + i * 2 + 1]);
    img[i] = static_cast<double>(v) / maxval;
  }
  return img;
}

void write_pgm(const fs::path& path, const Image& image, int bits) { atomic_write(path, encode_pgm(image, bits)); }
Image read_pgm(const fs::path& path) { return decode_pgm(read_file(path)); }

std::string encode_flow(const FlowField& flow) {
  std::string out = "EVFW";
  put_u32(out, static_cast<std::uint32_t>(flow.width()));
  put_u32(out, static_cast<std::uint32_t>(flow.height()));
  put_u64(out, static_cast<std::uint64_t>(flow.interval));
  for (std::size_t i = 0; i < flow.u.size(); ++i) {
    put_f32(out, static_cast<float>(flow.u[i]));
    put_f32(out, static_cast<float>(flow.v[i]));
  }
  return out;
}

FlowField decode_flow(std::string_view bytes, std::optional<std::pair<int, int>> expected_size) {
  Reader r(bytes, "flow file");
  r.magic("EVFW");
  const auto width = static_cast<int>(r.uint(4));
  const auto height = static_cast<int>(r.uint(4));
  const auto interval = static_cast<Timestamp>(r.uint(8));
  if (width <= 0 || height <= 0 || interval <= 0) throw FormatError("flow file: invalid header at byte offset 4");
  if (expected_size && (expected_size->first != width || expected_size->second != height)) {
    throw FormatError(fmt::format("flow file: size {}x{} at byte offset 4 does not match expected {}x{}", width, height,
                                  expected_size->first, expected_size->second));
  }
  FlowField flow(width, height, interval);
  for (std::size_t i = 0; i < flow.u.size(); ++i) {
    flow.u[i] = r.f32();
    flow.v[i] = r.f32();
  }
  if (r.remaining() != 0) throw FormatError(fmt::format("flow file: trailing bytes at byte offset {}", r.offset()));
  return flow;
}

void write_flow(const fs::path& path, const FlowField& flow) { atomic_write(path, encode_flow(flow)); }
FlowField read_flow(const fs::path& path, std::optional<std::pair<int, int>> expected_size) {
  return decode_flow(read_file(path), expected_size);
}

std::string encode_trajectory(const BezierTrajectory& traj) {
  std::string out = "# evdeblur trajectory: control poses as qw qx qy qz tx ty tz\n";
  out += fmt::format("# exposure {} {}\n", traj.exposure.t_open, traj.exposure.t_close);
  for (const SE3Pose& p : traj.control_points) {
    out += fmt::format("{:.17g} {:.17g} {:.17g} {:.17g} {:.17g} {:.17g} {:.17g}\n", p.rotation.w(), p.rotation.x(),
                       p.rotation.y(), p.rotation.z(), p.translation.x(), p.translation.y(), p.translation.z());
  }
  return out;
}

BezierTrajectory decode_trajectory(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  std::optional<ExposureWindow> exposure;
  std::vector<SE3Pose> poses;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t[0] == '#') {
      const auto f = split_ws(t.substr(1));
      if (f.size() == 3 && f[0] == "exposure") {
        exposure = ExposureWindow(parse_number<Timestamp>(f[1], lineno, "trajectory"),
                                  parse_number<Timestamp>(f[2], lineno, "trajectory"));
      }
      continue;
    }
    const auto f = split_ws(t);
    if (f.size() != 7) throw FormatError(fmt::format("trajectory: line {}: expected 7 numbers", lineno));
    double v[7];
    for (int k = 0; k < 7; ++k) v[k] = parse_number<double>(f[k], lineno, "trajectory");
    poses.emplace_back(Eigen::Quaterniond(v[0], v[1], v[2], v[3]), Eigen::Vector3d(v[4], v[5], v[6]));
  }
  if (!exposure) throw FormatError("trajectory: missing '# exposure' line");
  if (poses.size() != kControlPoints) {
    throw FormatError(fmt::format("trajectory: expected {} control poses, found {}", kControlPoints, poses.size()));
  }
  BezierTrajectory traj;
  traj.exposure = *exposure;
  for (int j = 0; j < kControlPoints; ++j) traj.control_points[j] = poses[j];
  return traj;
}

void write_trajectory(const fs::path& path, const BezierTrajectory& traj) {
  atomic_write(path, encode_trajectory(traj));
}
BezierTrajectory read_trajectory(const fs::path& path) { return decode_trajectory(read_file(path)); }

std::string ldi_architecture_descriptor(const LdiArchitecture& arch) {
  std::string out = "[ldi]\n";
  out += fmt::format("bins = {}\nhidden = {}\nlayers = {}\nkernel = 3\npadding = zero\n", arch.bins, arch.hidden,
                     arch.layers);
  out += fmt::format("leaky_slope = {:.17g}\nhidden_activation = leaky_relu\noutput_activation = softplus\n",
                     arch.leaky_slope);
  out += fmt::format("param_count = {}\nparam_layout = per layer: weights[cout][cin][3][3], bias[cout]\n",
                     arch.param_count());
  return out;
}

void save_ldi_checkpoint(const fs::path& path, const LdiNetwork& net) {
  const LdiArchitecture& arch = net.architecture();
  std::string out = "LDI1";
  const auto shapes = arch.layer_shapes();
  put_u32(out, static_cast<std::uint32_t>(shapes.size()));
  for (const auto& s : shapes) {
    put_u32(out, static_cast<std::uint32_t>(s.cin));
    put_u32(out, static_cast<std::uint32_t>(s.cout));
    put_u32(out, 3);
  }
  put_f64(out, arch.leaky_slope);
  put_u64(out, net.params().size());
  for (double p : net.params()) put_f64(out, p);
  atomic_write(path, out);
  fs::path desc = path;
  desc += ".arch";
  atomic_write(desc, ldi_architecture_descriptor(arch));
}

LdiNetwork load_ldi_checkpoint(const fs::path& path) {
  const std::string bytes = read_file(path);
  Reader r(bytes, "LDI checkpoint");
  r.magic("LDI1");
  const auto layers = static_cast<int>(r.uint(4));
  if (layers < 1) throw FormatError("LDI checkpoint: no layers at byte offset 4");
  LdiArchitecture arch;
  arch.layers = layers;
  std::vector<LdiArchitecture::Layer> shapes;
  for (int l = 0; l < layers; ++l) {
    const std::size_t at = r.offset();
    const auto cin = static_cast<int>(r.uint(4));
    const auto cout = static_cast<int>(r.uint(4));
    const auto k = static_cast<int>(r.uint(4));
    if (k != 3) throw FormatError(fmt::format("LDI checkpoint: kernel size {} at byte offset {}", k, at));
    shapes.push_back({cin, cout});
  }
  arch.bins = shapes.front().cin;
  arch.hidden = layers > 1 ? shapes.front().cout : 1;
  arch.leaky_slope = r.f64();
  if (shapes != arch.layer_shapes()) throw FormatError("LDI checkpoint: layer shapes do not form a supported stack");
  const std::uint64_t count = r.uint(8);
  if (count != arch.param_count()) {
    throw FormatError(fmt::format("LDI checkpoint: {} parameters at byte offset {}, expected {}", count,
                                  r.offset() - 8, arch.param_count()));
  }
  std::vector<double> params(count);
  for (double& p : params) p = r.f64();
  if (r.remaining() != 0) throw FormatError(fmt::format("LDI checkpoint: trailing bytes at byte offset {}", r.offset()));
  LdiNetwork net(arch);
  net.set_params(params);
  return net;
}

}  // namespace evd
