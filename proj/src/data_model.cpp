#include "fineparser/data_model.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <numbers>
#include <sstream>

#include "fineparser/error.h"
#include "fineparser/log.h"
#include "fineparser/rng.h"

namespace fineparser {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Samples and layouts

std::pair<int, int> transition_bin(int k, int num_transitions, int num_frames) {
  const auto lo = static_cast<int>((static_cast<long long>(k - 1) * num_frames) / num_transitions);
  const auto hi = static_cast<int>((static_cast<long long>(k) * num_frames) / num_transitions);
  return {lo, hi};
}

std::string VideoSample::violation() const {
  if (num_frames <= 0 || height <= 0 || width <= 0) return "non-positive dimensions";
  const std::size_t pixels = static_cast<std::size_t>(num_frames) * height * width;
  if (frames.size() != pixels * 3) return "frame buffer size mismatch";
  if (masks.size() != pixels) return "mask buffer size mismatch";
  for (float v : frames) {
    if (!(v >= 0.0f && v <= 1.0f)) return "pixel value outside [0,1]";
  }
  for (std::uint8_t m : masks) {
    if (m > 1) return "mask value not in {0,1}";
  }
  if (action_type.empty()) return "missing action type";
  if (!(difficulty > 0.0)) return "difficulty must be positive";
  if (!(score >= 0.0)) return "score must be non-negative";
  if (transitions.empty()) return "no transitions";
  const int n = static_cast<int>(transitions.size());
  for (int k = 1; k < n; ++k) {
    if (transitions[k] <= transitions[k - 1]) return "transitions not increasing";
  }
  for (int k = 1; k <= n; ++k) {
    const auto [lo, hi] = transition_bin(k, n, num_frames);
    const int t = transitions[k - 1];
    if (t <= lo || t > hi) {
      return "transition " + std::to_string(k) + " at frame " + std::to_string(t) + " outside bin (" +
             std::to_string(lo) + ", " + std::to_string(hi) + "]";
    }
  }
  if (transitions.back() >= num_frames) return "last transition leaves an empty final step";
  return {};
}

void VideoSample::validate() const {
  if (auto v = violation(); !v.empty()) throw DataError("sample '" + id + "': " + v);
}

void SnippetLayout::validate(int num_frames) const {
  if (num_snippets < 1 || snippet_len < 1 || stride < 1) throw ConfigError("snippet layout values must be positive");
  if (covered_frames() != num_frames) {
    throw ConfigError("snippet layout violates snippet_len + (N-1)*stride = T: " + std::to_string(snippet_len) +
                      " + (" + std::to_string(num_snippets) + "-1)*" + std::to_string(stride) +
                      " != " + std::to_string(num_frames));
  }
}

std::vector<std::vector<float>> snippetize(const VideoSample& sample, const SnippetLayout& layout) {
  layout.validate(sample.num_frames);
  const std::size_t frame_values = sample.frame_size() * 3;
  std::vector<std::vector<float>> out;
  out.reserve(layout.num_snippets);
  for (int i = 0; i < layout.num_snippets; ++i) {
    const auto begin = sample.frames.begin() + static_cast<std::ptrdiff_t>(layout.start(i) * frame_values);
    out.emplace_back(begin, begin + static_cast<std::ptrdiff_t>(layout.snippet_len * frame_values));
  }
  return out;
}

Tensor snippet_tensor(const VideoSample& sample, const SnippetLayout& layout) {
  layout.validate(sample.num_frames);
  const int n = layout.num_snippets, len = layout.snippet_len, h = sample.height, w = sample.width;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<double> values(static_cast<std::size_t>(n) * 3 * len * plane);
  for (int i = 0; i < n; ++i) {
    for (int t = 0; t < len; ++t) {
      const float* src = sample.frames.data() + static_cast<std::size_t>(layout.start(i) + t) * plane * 3;
      for (int c = 0; c < 3; ++c) {
        double* dst = values.data() + ((static_cast<std::size_t>(i) * 3 + c) * len + t) * plane;
        for (std::size_t p = 0; p < plane; ++p) dst[p] = static_cast<double>(src[p * 3 + c]) - 0.5;
      }
    }
  }
  return Tensor({n, 3, len, h, w}, std::move(values));
}

Tensor frame_tensor(const VideoSample& sample) {
  const int t_len = sample.num_frames, h = sample.height, w = sample.width;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<double> values(static_cast<std::size_t>(t_len) * 3 * plane);
  for (int t = 0; t < t_len; ++t) {
    const float* src = sample.frames.data() + static_cast<std::size_t>(t) * plane * 3;
    for (int c = 0; c < 3; ++c) {
      double* dst = values.data() + (static_cast<std::size_t>(t) * 3 + c) * plane;
      for (std::size_t p = 0; p < plane; ++p) dst[p] = static_cast<double>(src[p * 3 + c]) - 0.5;
    }
  }
  return Tensor({t_len, 3, 1, h, w}, std::move(values));
}

TimeMap stitch_map(const SnippetLayout& layout) {
  const int total = layout.covered_frames();
  TimeMap map;
  map.in_len = layout.num_snippets * layout.snippet_len;
  map.out_len = total;
  for (int f = 0; f < total; ++f) {
    std::vector<int> rows;
    for (int i = 0; i < layout.num_snippets; ++i) {
      const int offset = f - layout.start(i);
      if (offset >= 0 && offset < layout.snippet_len) rows.push_back(i * layout.snippet_len + offset);
    }
    for (int r : rows) map.entries.push_back({f, r, 1.0 / static_cast<double>(rows.size())});
  }
  return map;
}

// ---------------------------------------------------------------------------
// Pairing and splits

ExemplarSelection select_exemplars(const VideoSample& query, const Dataset& pool, int count, std::uint64_t seed) {
  if (count < 1) throw ConfigError("exemplar count must be >= 1");
  std::vector<const VideoSample*> eligible;
  for (const auto& s : pool) {
    if (s.action_type == query.action_type && s.id != query.id) eligible.push_back(&s);
  }
  if (eligible.empty()) {
    throw DataError("no exemplar with action type '" + query.action_type + "' for sample '" + query.id + "'");
  }
  Rng rng(derive_seed(seed, query.id));
  ExemplarSelection sel;
  if (static_cast<int>(eligible.size()) >= count) {
    for (int i = 0; i < count; ++i) {
      const auto j = i + static_cast<std::size_t>(rng.below(eligible.size() - i));
      std::swap(eligible[i], eligible[j]);
      sel.exemplars.push_back(eligible[i]);
    }
  } else {
    sel.with_replacement = true;
    log::warn("only " + std::to_string(eligible.size()) + " exemplars of type '" + query.action_type +
              "' for sample '" + query.id + "' (wanted " + std::to_string(count) + "); sampling with replacement");
    for (int i = 0; i < count; ++i) sel.exemplars.push_back(eligible[rng.below(eligible.size())]);
  }
  return sel;
}

Split split_dataset(std::size_t size, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train fraction must be in (0,1)");
  std::vector<std::size_t> idx(size);
  for (std::size_t i = 0; i < size; ++i) idx[i] = i;
  Rng rng(derive_seed(seed, "split"));
  rng.shuffle(idx);
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(size)));
  Split split;
  split.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

// ---------------------------------------------------------------------------
// Synthetic corpus

void SyntheticConfig::validate() const {
  if (count < 0) throw ConfigError("synthetic.count must be >= 0");
  if (num_frames <= 0 || height <= 0 || width <= 0) throw ConfigError("synthetic dimensions must be positive");
  if (num_transitions < 1) throw ConfigError("synthetic.num_transitions must be >= 1");
  if (num_frames < 4 * (num_transitions + 1)) throw ConfigError("synthetic.num_frames too short for the step count");
  if (score_noise < 0.0) throw ConfigError("synthetic.score_noise must be >= 0");
  if (rotation_min > rotation_max || deviation_min > deviation_max) throw ConfigError("empty motion range");
  if (rotation_min < 0.0 || rotation_max > 1.0 || deviation_min < 0.0 || deviation_max > 1.0) {
    throw ConfigError("motion ranges must lie in [0,1]");
  }
  if (action_types.empty()) throw ConfigError("synthetic.action_types is empty");
  for (const auto& t : action_types) {
    if (t.name.empty() || !(t.difficulty > 0.0)) throw ConfigError("invalid action type entry");
  }
}

double synthetic_execution(double rotation, double deviation) { return 4.0 + 2.0 * rotation + 3.0 * (1.0 - deviation); }

double synthetic_score_lipschitz(const SyntheticConfig& config) {
  double max_dd = 0.0;
  for (const auto& t : config.action_types) max_dd = std::max(max_dd, t.difficulty);
  return max_dd * std::sqrt(2.0 * 2.0 + 3.0 * 3.0);
}

namespace {

struct Ellipse {
  double cx, cy, a, b, angle;

  bool contains(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double c = std::cos(angle), s = std::sin(angle);
    const double u = dx * c + dy * s;
    const double v = -dx * s + dy * c;
    return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
  }
};

struct Grating {
  double amp, kx, ky, phase, drift;
  double weight[3];
};

// Step index (0-based) of a 0-based frame.
int phase_of(int frame, const std::vector<int>& transitions) {
  int p = 0;
  for (int t : transitions) {
    if (frame >= t) ++p;
  }
  return p;
}

}  // namespace

VideoSample render_synthetic(const SyntheticConfig& config, const ActionTypeSpec& type, const MotionParams& motion,
                             std::uint64_t texture_seed, double noise) {
  using std::numbers::pi;
  const int T = config.num_frames, H = config.height, W = config.width;
  const int L = static_cast<int>(motion.transitions.size());
  const double S = std::min(H, W);
  Rng rng(texture_seed);

  std::vector<Grating> gratings(3);
  for (auto& g : gratings) {
    const double freq = rng.uniform(0.5, 2.0) * 2.0 * pi / S;
    const double orient = rng.uniform(0.0, pi);
    g.amp = rng.uniform(0.03, 0.08);
    g.kx = freq * std::cos(orient);
    g.ky = freq * std::sin(orient);
    g.phase = rng.uniform(0.0, 2.0 * pi);
    g.drift = rng.uniform(-0.08, 0.08);
    for (double& w : g.weight) w = rng.uniform(0.5, 1.0);
  }
  const double distractor_speed = rng.uniform(0.05, 0.2);
  const double distractor_phase = rng.uniform(0.0, 2.0 * pi);
  const double distractor_r = rng.uniform(0.04, 0.08) * S;
  const double distractor_u = rng.uniform(0.78, 0.9);

  const int first = motion.transitions.front();
  const int last = motion.transitions.back();
  const double body_a = 0.14 * S, body_b = 0.06 * S;
  const double dir = type.rotation_direction >= 0 ? 1.0 : -1.0;

  VideoSample s;
  s.num_frames = T;
  s.height = H;
  s.width = W;
  s.frames.resize(static_cast<std::size_t>(T) * H * W * 3);
  s.masks.resize(static_cast<std::size_t>(T) * H * W);
  s.action_type = type.name;
  s.difficulty = type.difficulty;
  s.transitions = motion.transitions;
  s.score = std::max(0.0, type.difficulty * synthetic_execution(motion.rotation, motion.deviation) + noise);

  for (int f = 0; f < T; ++f) {
    const int p = phase_of(f, motion.transitions);
    Ellipse body{0, 0, body_a, body_b, pi / 2};
    bool splash_on = false;
    Ellipse splash{0, 0, 1, 1, 0};
    if (p == 0) {
      body.cx = 0.22 * W;
      body.cy = (0.24 - 0.03 * std::abs(std::sin(pi * f / 8.0 + motion.bob_phase))) * H;
    } else if (p < L) {
      const double s_prog = static_cast<double>(f - first) / std::max(1, last - first);
      body.cx = (0.22 + 0.46 * s_prog) * W;
      body.cy = (0.24 + 0.46 * s_prog - 0.35 * s_prog * (1.0 - s_prog)) * H;
      body.angle = pi / 2 + dir * pi * (1.0 + 2.0 * motion.rotation) * s_prog;
      if (p % 2 == 0) {  // tuck-like sub-phase
        body.a *= 0.7;
        body.b *= 1.5;
      }
    } else {
      const double e = static_cast<double>(f - last) / std::max(1, T - last);
      body.cx = 0.68 * W;
      body.cy = (0.70 + 0.08 * e) * H;
      body.angle = pi / 2 + dir * motion.deviation * (pi / 3);
      const double grow = std::min(1.0, (f - last + 1) / 5.0);
      splash_on = true;
      splash = {0.68 * W, 0.84 * H, S * (0.08 + 0.14 * motion.deviation) * grow + 0.5,
                S * (0.035 + 0.05 * motion.deviation) * grow + 0.5, 0.0};
    }
    const double du = distractor_u * W;
    const double dv = (0.2 + 0.1 * std::sin(distractor_speed * f + distractor_phase)) * H;

    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const double px = x + 0.5, py = y + 0.5;
        const std::size_t pix = (static_cast<std::size_t>(f) * H + y) * W + x;
        float* rgb = s.frames.data() + pix * 3;
        const bool in_body = body.contains(px, py);
        const bool in_splash = splash_on && splash.contains(px, py);
        s.masks[pix] = (in_body || in_splash) ? 1 : 0;
        double c[3];
        if (in_body) {
          c[0] = 0.95;
          c[1] = 0.55;
          c[2] = 0.35;
        } else if (in_splash) {
          c[0] = 0.92;
          c[1] = 0.95;
          c[2] = 1.0;
        } else {
          const bool water = py > 0.8 * H;
          c[0] = water ? 0.15 : 0.45;
          c[1] = water ? 0.35 : 0.55;
          c[2] = water ? 0.60 : 0.65;
          const double v = py / H, u = px / W;
          if (u > 0.05 && u < 0.32 && v > 0.30 && v < 0.34) c[0] = c[1] = c[2] = 0.6;  // board
          for (const auto& g : gratings) {
            const double wave = g.amp * std::sin(g.kx * px + g.ky * py + g.phase + g.drift * f);
            for (int k = 0; k < 3; ++k) c[k] += g.weight[k] * wave;
          }
          const double ddx = px - du, ddy = py - dv;
          if (ddx * ddx + ddy * ddy <= distractor_r * distractor_r) {
            c[0] = 0.8;
            c[1] = 0.75;
            c[2] = 0.3;
          }
        }
        for (int k = 0; k < 3; ++k) {
          const double v = std::clamp(c[k] + 0.02 * rng.normal(), 0.0, 1.0);
          rgb[k] = static_cast<float>(v);
        }
      }
    }
  }
  return s;
}

Dataset generate_synthetic(const SyntheticConfig& config) {
  config.validate();
  Dataset out;
  out.reserve(static_cast<std::size_t>(config.count));
  const int L = config.num_transitions;
  const int T = config.num_frames;
  for (int i = 0; i < config.count; ++i) {
    Rng rng(derive_seed(config.seed, "sample", static_cast<std::uint64_t>(i)));
    const auto& type = config.action_types[static_cast<std::size_t>(i) % config.action_types.size()];
    MotionParams m;
    m.rotation = rng.uniform(config.rotation_min, config.rotation_max);
    m.deviation = rng.uniform(config.deviation_min, config.deviation_max);
    m.bob_phase = rng.uniform(0.0, std::numbers::pi);
    for (int k = 1; k <= L; ++k) {
      const auto [lo, hi] = transition_bin(k, L, T);
      const int width = hi - lo;
      const int a = lo + std::max(1, static_cast<int>(std::ceil(0.3 * width)));
      const int b = std::max(a, lo + static_cast<int>(std::floor(0.85 * width)));
      m.transitions.push_back(std::min(rng.range(a, b), T - 1));
    }
    const std::uint64_t texture_seed = rng.next();
    const double noise = config.score_noise > 0.0 ? rng.uniform(-config.score_noise, config.score_noise) : 0.0;
    VideoSample s = render_synthetic(config, type, m, texture_seed, noise);
    std::ostringstream id;
    id << "syn" << std::setw(5) << std::setfill('0') << i;
    s.id = id.str();
    s.validate();
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Mask codec

std::vector<std::uint32_t> rle_encode(std::span<const std::uint8_t> mask) {
  std::vector<std::uint32_t> runs;
  std::uint8_t current = 0;
  std::uint32_t len = 0;
  for (std::uint8_t m : mask) {
    if (m > 1) throw DataError("rle_encode: mask value not binary");
    if (m == current) {
      ++len;
    } else {
      runs.push_back(len);
      current = m;
      len = 1;
    }
  }
  runs.push_back(len);
  return runs;
}

std::vector<std::uint8_t> rle_decode(std::span<const std::uint32_t> runs, int height, int width) {
  const std::uint64_t total = static_cast<std::uint64_t>(height) * width;
  std::uint64_t sum = 0;
  for (auto r : runs) sum += r;
  if (sum != total) {
    throw DataError("rle_decode: corrupt record, runs sum to " + std::to_string(sum) + " but mask has " +
                    std::to_string(total) + " pixels");
  }
  std::vector<std::uint8_t> mask;
  mask.reserve(total);
  std::uint8_t value = 0;
  for (auto r : runs) {
    mask.insert(mask.end(), r, value);
    value ^= 1;
  }
  return mask;
}

// ---------------------------------------------------------------------------
// File formats

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(const unsigned char* b) {
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

// Reads the next whitespace-delimited header token of a PNM file, skipping comments.
std::string pnm_token(std::istream& is) {
  std::string tok;
  char c = 0;
  while (is.get(c)) {
    if (c == '#') {
      std::string line;
      std::getline(is, line);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(c);
  }
  return tok;
}

std::vector<std::uint8_t> read_pnm(const fs::path& path, const char* magic, int channels, int& height, int& width) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  if (pnm_token(is) != magic) throw DataError(path.string() + ": expected " + std::string(magic) + " image");
  width = std::stoi(pnm_token(is));
  height = std::stoi(pnm_token(is));
  const int maxval = std::stoi(pnm_token(is));
  if (maxval != 255) throw DataError(path.string() + ": only 8-bit images are supported");
  std::vector<std::uint8_t> px(static_cast<std::size_t>(width) * height * channels);
  is.read(reinterpret_cast<char*>(px.data()), static_cast<std::streamsize>(px.size()));
  if (!is) throw DataError(path.string() + ": truncated image");
  return px;
}

std::vector<fs::path> sorted_files(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace

void write_packed_frames(const fs::path& path, const VideoSample& sample) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  os.write("FPV1", 4);
  put_u32(os, static_cast<std::uint32_t>(sample.num_frames));
  put_u32(os, static_cast<std::uint32_t>(sample.height));
  put_u32(os, static_cast<std::uint32_t>(sample.width));
  for (float v : sample.frames) put_u32(os, std::bit_cast<std::uint32_t>(v));
  if (!os) throw DataError("write failed for " + path.string());
}

void read_packed_frames(const fs::path& path, VideoSample& sample) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open frames file " + path.string());
  unsigned char header[16];
  is.read(reinterpret_cast<char*>(header), 16);
  if (!is || std::memcmp(header, "FPV1", 4) != 0) throw DataError(path.string() + ": bad FPV1 header");
  sample.num_frames = static_cast<int>(get_u32(header + 4));
  sample.height = static_cast<int>(get_u32(header + 8));
  sample.width = static_cast<int>(get_u32(header + 12));
  const std::size_t count = static_cast<std::size_t>(sample.num_frames) * sample.height * sample.width * 3;
  std::vector<unsigned char> raw(count * 4);
  is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!is) throw DataError(path.string() + ": truncated frame data");
  sample.frames.resize(count);
  for (std::size_t i = 0; i < count; ++i) sample.frames[i] = std::bit_cast<float>(get_u32(raw.data() + 4 * i));
}

void write_pgm(const fs::path& path, std::span<const std::uint8_t> pixels, int height, int width) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  os << "P5\n" << width << ' ' << height << "\n255\n";
  os.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}

std::vector<std::uint8_t> read_pgm(const fs::path& path, int& height, int& width) {
  return read_pnm(path, "P5", 1, height, width);
}

std::vector<std::uint8_t> read_ppm(const fs::path& path, int& height, int& width) {
  return read_pnm(path, "P6", 3, height, width);
}

namespace {

// Returns an empty string on success, otherwise the skip reason.
std::string load_frames(const fs::path& path, VideoSample& s) {
  if (!fs::exists(path)) return "missing frames at " + path.string();
  if (fs::is_directory(path)) {
    const auto files = sorted_files(path);
    if (files.empty()) return "empty frames directory " + path.string();
    s.num_frames = static_cast<int>(files.size());
    for (std::size_t t = 0; t < files.size(); ++t) {
      int h = 0, w = 0;
      const auto px = read_ppm(files[t], h, w);
      if (t == 0) {
        s.height = h;
        s.width = w;
        s.frames.reserve(files.size() * px.size());
      } else if (h != s.height || w != s.width) {
        return "frame " + files[t].filename().string() + " has inconsistent size";
      }
      for (auto v : px) s.frames.push_back(static_cast<float>(v) / 255.0f);
    }
    return {};
  }
  read_packed_frames(path, s);
  return {};
}

std::string load_masks(const json& masks, const fs::path& root, VideoSample& s) {
  const std::size_t plane = s.frame_size();
  s.masks.clear();
  s.masks.reserve(plane * static_cast<std::size_t>(s.num_frames));
  if (masks.is_array()) {
    if (static_cast<int>(masks.size()) < s.num_frames) {
      return "missing mask frame " + std::to_string(masks.size() + 1) + " of " + std::to_string(s.num_frames);
    }
    if (static_cast<int>(masks.size()) > s.num_frames) return "more mask frames than video frames";
    for (const auto& rec : masks) {
      const auto runs = rec.get<std::vector<std::uint32_t>>();
      const auto m = rle_decode(runs, s.height, s.width);
      s.masks.insert(s.masks.end(), m.begin(), m.end());
    }
    return {};
  }
  if (masks.is_string()) {
    const fs::path dir = root / masks.get<std::string>();
    if (!fs::is_directory(dir)) return "missing mask directory " + dir.string();
    const auto files = sorted_files(dir);
    if (static_cast<int>(files.size()) < s.num_frames) {
      return "missing mask frame " + std::to_string(files.size() + 1) + " of " + std::to_string(s.num_frames);
    }
    for (int t = 0; t < s.num_frames; ++t) {
      int h = 0, w = 0;
      const auto px = read_pgm(files[static_cast<std::size_t>(t)], h, w);
      if (h != s.height || w != s.width) return "mask frame " + std::to_string(t + 1) + " has wrong size";
      for (auto v : px) s.masks.push_back(v > 127 ? 1 : 0);
    }
    return {};
  }
  return "masks must be an RLE array or a directory path";
}

}  // namespace

LoadResult load_annotations(const fs::path& root, const fs::path& manifest) {
  std::ifstream is(manifest);
  if (!is) throw DataError("cannot open manifest " + manifest.string());
  LoadResult result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json entry;
    try {
      entry = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(line_no, std::string("malformed JSON: ") + e.what());
    }
    if (!entry.is_object()) throw ParseError(line_no, "entry is not an object");
    for (const char* key : {"frames_path", "masks", "action_type", "difficulty", "score", "transitions"}) {
      if (!entry.contains(key)) throw ParseError(line_no, std::string("missing field '") + key + "'");
    }
    VideoSample s;
    try {
      s.id = entry.value("sample_id", "line" + std::to_string(line_no));
      s.action_type = entry.at("action_type").get<std::string>();
      s.difficulty = entry.at("difficulty").get<double>();
      s.score = entry.at("score").get<double>();
      s.transitions = entry.at("transitions").get<std::vector<int>>();
    } catch (const json::exception& e) {
      throw ParseError(line_no, std::string("bad field type: ") + e.what());
    }
    auto reject = [&](std::string reason) {
      log::warn("skipping sample '" + s.id + "' (manifest line " + std::to_string(line_no) + "): " + reason);
      result.rejected.push_back({line_no, s.id, std::move(reason)});
    };
    try {
      if (auto r = load_frames(root / entry.at("frames_path").get<std::string>(), s); !r.empty()) {
        reject(r);
        continue;
      }
      if (auto r = load_masks(entry.at("masks"), root, s); !r.empty()) {
        reject(r);
        continue;
      }
    } catch (const DataError& e) {
      reject(e.what());
      continue;
    } catch (const json::exception& e) {
      throw ParseError(line_no, std::string("bad masks field: ") + e.what());
    }
    if (auto v = s.violation(); !v.empty()) {
      reject(v);
      continue;
    }
    result.samples.push_back(std::move(s));
  }
  return result;
}

void export_corpus(const Dataset& dataset, const fs::path& root, const std::string& manifest_name) {
  fs::create_directories(root / "frames");
  std::ofstream os(root / manifest_name);
  if (!os) throw DataError("cannot write manifest in " + root.string());
  for (const auto& s : dataset) {
    const std::string rel = "frames/" + s.id + ".fpv";
    write_packed_frames(root / rel, s);
    json masks = json::array();
    const std::size_t plane = s.frame_size();
    for (int t = 0; t < s.num_frames; ++t) {
      masks.push_back(rle_encode(std::span(s.masks).subspan(static_cast<std::size_t>(t) * plane, plane)));
    }
    json entry = {{"sample_id", s.id},       {"frames_path", rel}, {"masks", std::move(masks)},
                  {"action_type", s.action_type}, {"difficulty", s.difficulty}, {"score", s.score},
                  {"transitions", s.transitions}};
    os << entry.dump() << '\n';
  }
}

}  // namespace fineparser
