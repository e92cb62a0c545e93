#include "v2m/formats.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

namespace v2m {

namespace {

void check(bool ok, const std::string& msg) {
  if (!ok) throw std::runtime_error(msg);
}

// little-endian byte appenders
void put_u16(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<uint32_t>(v)); }
void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<uint64_t>(v)); }

// bounds-checked little-endian reader that reports byte offsets
struct Reader {
  const std::string& path;
  std::string bytes;
  size_t pos = 0;

  void need(size_t n, const char* what) {
    if (pos + n > bytes.size())
      throw std::runtime_error(path + ": unexpected end of file at byte " +
                               std::to_string(pos) + " while reading " + what);
  }
  uint8_t u8(const char* what) {
    need(1, what);
    return static_cast<uint8_t>(bytes[pos++]);
  }
  uint16_t u16(const char* what) {
    need(2, what);
    uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<uint16_t>(static_cast<uint8_t>(bytes[pos + i])) << (8 * i);
    pos += 2;
    return v;
  }
  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(bytes[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64(const char* what) {
    need(8, what);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(bytes[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  std::string raw(size_t n, const char* what) {
    need(n, what);
    std::string s = bytes.substr(pos, n);
    pos += n;
    return s;
  }
  void expect_magic(const char* magic) {
    const size_t at = pos;
    std::string got = raw(4, "magic");
    if (got != magic)
      throw std::runtime_error(path + ": expected magic '" + magic +
                               "' at byte " + std::to_string(at));
  }
};

Reader open_reader(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), path + ": cannot open file");
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return Reader{path, std::move(bytes), 0};
}

void write_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  check(out.good(), path + ": cannot open file for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  check(out.good(), path + ": write failed");
}

constexpr uint8_t kDtypeF32 = 1;
constexpr uint8_t kDtypeF64 = 2;

void put_section(std::string& out, const NamedArray& a, uint8_t dtype) {
  check(a.name.size() <= 0xffff, "section name too long: " + a.name);
  check(!a.shape.empty() && a.shape.size() <= 0xff,
        "section '" + a.name + "' has invalid rank");
  size_t numel = 1;
  for (int d : a.shape) {
    check(d >= 1, "section '" + a.name + "' has non-positive dim");
    numel *= static_cast<size_t>(d);
  }
  check(numel == a.data.size(), "section '" + a.name + "' payload has " +
                                    std::to_string(a.data.size()) +
                                    " values, shape needs " + std::to_string(numel));
  put_u16(out, static_cast<uint16_t>(a.name.size()));
  out += a.name;
  out.push_back(static_cast<char>(dtype));
  out.push_back(static_cast<char>(a.shape.size()));
  for (int d : a.shape) put_u32(out, static_cast<uint32_t>(d));
  if (dtype == kDtypeF32)
    for (double x : a.data) put_f32(out, static_cast<float>(x));
  else
    for (double x : a.data) put_f64(out, x);
}

NamedArray get_section(Reader& r) {
  NamedArray a;
  const uint16_t name_len = r.u16("section name length");
  a.name = r.raw(name_len, "section name");
  const uint8_t dtype = r.u8("section dtype");
  check(dtype == kDtypeF32 || dtype == kDtypeF64,
        r.path + ": section '" + a.name + "' has unknown dtype code " +
            std::to_string(dtype) + " at byte " + std::to_string(r.pos - 1));
  const uint8_t ndim = r.u8("section rank");
  size_t numel = 1;
  for (int i = 0; i < ndim; ++i) {
    const uint32_t d = r.u32("section dim");
    a.shape.push_back(static_cast<int>(d));
    numel *= d;
  }
  a.data.resize(numel);
  if (dtype == kDtypeF32) {
    std::string raw = r.raw(numel * 4, "f32 payload");
    for (size_t i = 0; i < numel; ++i) {
      uint32_t bits = 0;
      for (int b = 0; b < 4; ++b)
        bits |= static_cast<uint32_t>(static_cast<uint8_t>(raw[i * 4 + b])) << (8 * b);
      a.data[i] = static_cast<double>(std::bit_cast<float>(bits));
    }
  } else {
    std::string raw = r.raw(numel * 8, "f64 payload");
    for (size_t i = 0; i < numel; ++i) {
      uint64_t bits = 0;
      for (int b = 0; b < 8; ++b)
        bits |= static_cast<uint64_t>(static_cast<uint8_t>(raw[i * 8 + b])) << (8 * b);
      a.data[i] = std::bit_cast<double>(bits);
    }
  }
  return a;
}

void check_unique_names(const std::vector<NamedArray>& sections,
                        const std::string& context) {
  std::set<std::string> seen;
  for (const NamedArray& a : sections)
    check(seen.insert(a.name).second,
          context + ": duplicate section name '" + a.name + "'");
}

// PPM helpers: whitespace/comment-aware token scan that tracks offsets
int ppm_int(Reader& r) {
  while (true) {
    r.need(1, "header token");
    const char c = r.bytes[r.pos];
    if (c == '#') {
      while (r.pos < r.bytes.size() && r.bytes[r.pos] != '\n') ++r.pos;
    } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
      ++r.pos;
    } else {
      break;
    }
  }
  const size_t start = r.pos;
  int v = 0;
  bool any = false;
  while (r.pos < r.bytes.size() && r.bytes[r.pos] >= '0' && r.bytes[r.pos] <= '9') {
    v = v * 10 + (r.bytes[r.pos] - '0');
    ++r.pos;
    any = true;
  }
  if (!any)
    throw std::runtime_error(r.path + ": expected integer at byte " +
                             std::to_string(start));
  return v;
}

}  // namespace

Waveform read_wav(const std::string& path) {
  Reader r = open_reader(path);
  r.expect_magic("RIFF");
  r.u32("RIFF size");
  {
    const size_t at = r.pos;
    if (r.raw(4, "WAVE tag") != "WAVE")
      throw std::runtime_error(path + ": expected 'WAVE' at byte " +
                               std::to_string(at));
  }

  bool have_fmt = false;
  Waveform w;
  while (r.pos < r.bytes.size()) {
    const std::string id = r.raw(4, "chunk id");
    const uint32_t size = r.u32("chunk size");
    const size_t body = r.pos;
    if (id == "fmt ") {
      const uint16_t format = r.u16("audio format");
      check(format == 1, path + ": audio format " + std::to_string(format) +
                             " at byte " + std::to_string(body) +
                             " is not PCM (1)");
      const uint16_t channels = r.u16("channel count");
      check(channels == 1, path + ": " + std::to_string(channels) +
                               " channels; only mono is supported");
      const uint32_t rate = r.u32("sample rate");
      check(rate == static_cast<uint32_t>(kSampleRate),
            path + ": sample rate " + std::to_string(rate) + " is not " +
                std::to_string(kSampleRate));
      r.u32("byte rate");
      r.u16("block align");
      const uint16_t bits = r.u16("bits per sample");
      check(bits == 16, path + ": " + std::to_string(bits) +
                            "-bit samples; only 16-bit is supported");
      have_fmt = true;
    } else if (id == "data") {
      check(have_fmt, path + ": data chunk at byte " + std::to_string(body - 8) +
                          " precedes fmt chunk");
      check(size % 2 == 0, path + ": odd data chunk size at byte " +
                               std::to_string(body - 4));
      const std::string raw = r.raw(size, "sample data");
      w.samples.resize(size / 2);
      for (size_t i = 0; i < w.samples.size(); ++i) {
        const uint16_t u = static_cast<uint16_t>(static_cast<uint8_t>(raw[2 * i])) |
                           (static_cast<uint16_t>(static_cast<uint8_t>(raw[2 * i + 1])) << 8);
        w.samples[i] = static_cast<int16_t>(u) / 32768.0;
      }
      return w;
    }
    // skip unknown chunks (word-aligned)
    r.pos = body + size + (size % 2);
  }
  throw std::runtime_error(path + ": no data chunk found");
}

void write_wav(const std::string& path, const Waveform& w) {
  check(w.sample_rate == kSampleRate,
        path + ": refusing to write sample rate " + std::to_string(w.sample_rate));
  std::string out;
  const uint32_t data_size = static_cast<uint32_t>(w.samples.size() * 2);
  out += "RIFF";
  put_u32(out, 36 + data_size);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, 1);  // mono
  put_u32(out, kSampleRate);
  put_u32(out, kSampleRate * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out += "data";
  put_u32(out, data_size);
  for (double s : w.samples) {
    const double c = std::clamp(s, -1.0, 1.0);
    const int16_t q = static_cast<int16_t>(std::lrint(c * 32767.0));
    put_u16(out, static_cast<uint16_t>(q));
  }
  write_bytes(path, out);
}

Image read_ppm(const std::string& path) {
  Reader r = open_reader(path);
  {
    const size_t at = r.pos;
    if (r.raw(2, "PPM magic") != "P6")
      throw std::runtime_error(path + ": expected 'P6' at byte " +
                               std::to_string(at));
  }
  const int w = ppm_int(r);
  const int h = ppm_int(r);
  const int maxval = ppm_int(r);
  check(w > 0 && h > 0, path + ": bad dimensions " + std::to_string(w) + "x" +
                            std::to_string(h));
  check(maxval == 255, path + ": maxval " + std::to_string(maxval) +
                           " unsupported, need 255");
  r.need(1, "pixel separator");
  ++r.pos;  // single whitespace after maxval
  Image img(w, h);
  const std::string raw = r.raw(img.rgb.size(), "pixel data");
  std::copy(raw.begin(), raw.end(), reinterpret_cast<char*>(img.rgb.data()));
  return img;
}

void write_ppm(const std::string& path, const Image& img) {
  check(img.width > 0 && img.height > 0, path + ": refusing to write empty image");
  std::string out = "P6\n" + std::to_string(img.width) + " " +
                    std::to_string(img.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(img.rgb.data()), img.rgb.size());
  write_bytes(path, out);
}

FrameSequence read_frame_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  check(fs::is_directory(dir), dir + ": not a directory");
  FrameSequence seq;
  char name[32];
  for (int i = 0;; ++i) {
    std::snprintf(name, sizeof(name), "frame_%05d.ppm", i);
    const fs::path p = fs::path(dir) / name;
    if (!fs::exists(p)) break;
    seq.frames.push_back(read_ppm(p.string()));
  }
  check(!seq.frames.empty(), dir + ": no frame_00000.ppm found");
  return seq;
}

void write_frame_dir(const std::string& dir, const FrameSequence& fs_in) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  char name[32];
  for (size_t i = 0; i < fs_in.frames.size(); ++i) {
    std::snprintf(name, sizeof(name), "frame_%05zu.ppm", i);
    write_ppm((fs::path(dir) / name).string(), fs_in.frames[i]);
  }
}

const NamedArray* FeatureFile::find(const std::string& name) const {
  for (const NamedArray& a : sections)
    if (a.name == name) return &a;
  return nullptr;
}

const NamedArray& FeatureFile::require(const std::string& name) const {
  const NamedArray* a = find(name);
  check(a != nullptr, "feature file is missing section '" + name + "'");
  return *a;
}

void write_feature_file(const std::string& path, const FeatureFile& ff) {
  check_unique_names(ff.sections, path);
  std::string out = "V2MF";
  put_u16(out, 1);  // version
  put_u16(out, static_cast<uint16_t>(ff.sections.size()));
  for (const NamedArray& a : ff.sections) put_section(out, a, kDtypeF32);
  write_bytes(path, out);
}

FeatureFile read_feature_file(const std::string& path) {
  Reader r = open_reader(path);
  r.expect_magic("V2MF");
  const uint16_t version = r.u16("version");
  check(version == 1, path + ": unsupported feature version " +
                          std::to_string(version));
  const uint16_t count = r.u16("section count");
  FeatureFile ff;
  for (int i = 0; i < count; ++i) ff.sections.push_back(get_section(r));
  check_unique_names(ff.sections, path);
  return ff;
}

void write_checkpoint(const std::string& path, const Checkpoint& ck) {
  check_unique_names(ck.params, path);
  std::string out = "V2MC";
  put_u16(out, 1);  // version
  put_u32(out, static_cast<uint32_t>(ck.config_text.size()));
  out += ck.config_text;
  out.push_back(static_cast<char>(ck.strategy_kind));
  put_u32(out, ck.epoch);
  put_u64(out, ck.opt_step);
  for (uint64_t s : ck.rng_state) put_u64(out, s);
  put_u16(out, static_cast<uint16_t>(ck.params.size()));
  for (const NamedArray& a : ck.params) put_section(out, a, kDtypeF64);
  write_bytes(path, out);
}

Checkpoint read_checkpoint(const std::string& path) {
  Reader r = open_reader(path);
  r.expect_magic("V2MC");
  const uint16_t version = r.u16("version");
  check(version == 1, path + ": unsupported checkpoint version " +
                          std::to_string(version));
  Checkpoint ck;
  const uint32_t cfg_len = r.u32("config length");
  ck.config_text = r.raw(cfg_len, "config snapshot");
  ck.strategy_kind = r.u8("strategy kind");
  ck.epoch = r.u32("epoch");
  ck.opt_step = r.u64("optimizer step");
  for (uint64_t& s : ck.rng_state) s = r.u64("rng state");
  const uint16_t count = r.u16("parameter count");
  for (int i = 0; i < count; ++i) ck.params.push_back(get_section(r));
  check_unique_names(ck.params, path);
  return ck;
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

void write_csv(const std::string& path,
               const std::vector<std::vector<std::string>>& rows) {
  std::string out;
  for (const auto& row : rows) {
    for (size_t i = 0; i < row.size(); ++i) {
      if (i) out.push_back(',');
      out += csv_escape(row[i]);
    }
    out.push_back('\n');
  }
  write_bytes(path, out);
}

bool Config::has(const std::string& key) const {
  for (const auto& [k, v] : entries)
    if (k == key) return true;
  return false;
}

void Config::set(const std::string& key, const std::string& value) {
  for (auto& [k, v] : entries)
    if (k == key) {
      v = value;
      return;
    }
  entries.emplace_back(key, value);
}

std::string Config::get_string(const std::string& key,
                               const std::string& fallback) const {
  for (const auto& [k, v] : entries)
    if (k == key) return v;
  return fallback;
}

std::string Config::require_string(const std::string& key) const {
  for (const auto& [k, v] : entries)
    if (k == key) return v;
  throw std::runtime_error("config: missing required key '" + key + "'");
}

int64_t Config::get_int(const std::string& key, int64_t fallback) const {
  if (!has(key)) return fallback;
  const std::string v = get_string(key, "");
  int64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  check(ec == std::errc() && ptr == v.data() + v.size(),
        "config: key '" + key + "' value '" + v + "' is not an integer");
  return out;
}

double Config::get_double(const std::string& key, double fallback) const {
  if (!has(key)) return fallback;
  const std::string v = get_string(key, "");
  try {
    size_t idx = 0;
    const double out = std::stod(v, &idx);
    check(idx == v.size(), "");
    return out;
  } catch (const std::exception&) {
    throw std::runtime_error("config: key '" + key + "' value '" + v +
                             "' is not a number");
  }
}

std::string Config::text() const {
  std::string out;
  for (const auto& [k, v] : entries) out += k + "=" + v + "\n";
  return out;
}

void Config::reject_unknown(const std::vector<std::string>& known) const {
  std::string bad;
  for (const auto& [k, v] : entries) {
    if (std::find(known.begin(), known.end(), k) == known.end()) {
      if (!bad.empty()) bad += ", ";
      bad += k;
    }
  }
  check(bad.empty(), "config: unknown keys: " + bad);
}

Config parse_config_text(const std::string& text) {
  Config cfg;
  size_t line_no = 0;
  size_t start = 0;
  while (start <= text.size()) {
    size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const size_t first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const size_t eq = line.find('=');
    check(eq != std::string::npos, "config line " + std::to_string(line_no) +
                                       " has no '=': " + line);
    auto trim = [](std::string s) {
      const size_t a = s.find_first_not_of(" \t");
      if (a == std::string::npos) return std::string();
      const size_t b = s.find_last_not_of(" \t");
      return s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    check(!key.empty(), "config line " + std::to_string(line_no) + " has empty key");
    check(!cfg.has(key), "config: duplicate key '" + key + "'");
    cfg.entries.emplace_back(key, value);
  }
  return cfg;
}

Config load_config(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), path + ": cannot open config");
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return parse_config_text(text);
}

}  // namespace v2m
