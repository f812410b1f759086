#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "fineparser/ops.h"
#include "fineparser/tensor.h"

namespace fineparser {

// One judged video: frames, per-frame foreground masks, step transitions and
// the final score.
struct VideoSample {
  std::string id;
  int num_frames = 0;
  int height = 0;
  int width = 0;
  std::vector<float> frames;         // [T, H, W, 3] in [0, 1]
  std::vector<std::uint8_t> masks;   // [T, H, W] in {0, 1}
  std::string action_type;
  double difficulty = 1.0;
  double score = 0.0;
  std::vector<int> transitions;      // 1-based, strictly increasing

  // First violated invariant, or empty when the sample is valid.
  std::string violation() const;
  void validate() const;             // throws DataError
  std::size_t frame_size() const { return static_cast<std::size_t>(height) * width; }

  friend bool operator==(const VideoSample&, const VideoSample&) = default;
};

using Dataset = std::vector<VideoSample>;

// Bin k (1-based) of L' bins over T frames: (lo, hi] with integer edges
// floor((k-1)T/L') and floor(kT/L').
std::pair<int, int> transition_bin(int k, int num_transitions, int num_frames);

struct SnippetLayout {
  int num_snippets = 9;
  int snippet_len = 16;
  int stride = 10;

  int covered_frames() const { return snippet_len + (num_snippets - 1) * stride; }
  void validate(int num_frames) const;  // throws ConfigError
  int start(int i) const { return i * stride; }
};

// Frame indices [start, start + snippet_len) for every snippet.
std::vector<std::vector<float>> snippetize(const VideoSample& sample, const SnippetLayout& layout);
// Snippets as a network input [N, 3, L, H, W], centered around zero.
Tensor snippet_tensor(const VideoSample& sample, const SnippetLayout& layout);
// Frames as [T, 3, 1, H, W], centered around zero.
Tensor frame_tensor(const VideoSample& sample);
// Averages overlapping snippet frames back onto the video timeline:
// [N * L, ...] -> [T, ...].
TimeMap stitch_map(const SnippetLayout& layout);

struct QueryExemplarPair {
  const VideoSample* query = nullptr;
  const VideoSample* exemplar = nullptr;
};

struct ExemplarSelection {
  std::vector<const VideoSample*> exemplars;
  bool with_replacement = false;  // pool was smaller than E
};

// Uniform draw of E same-type exemplars (never the query itself). Falls back to
// sampling with replacement, with a logged warning, when the pool is short.
ExemplarSelection select_exemplars(const VideoSample& query, const Dataset& pool, int count, std::uint64_t seed);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};
Split split_dataset(std::size_t size, double train_fraction, std::uint64_t seed);

struct ActionTypeSpec {
  std::string name;
  double difficulty = 2.0;
  int rotation_direction = 1;
};

struct SyntheticConfig {
  int count = 200;
  int num_frames = 96;
  int height = 32;
  int width = 32;
  int num_transitions = 2;
  std::uint64_t seed = 7;
  double score_noise = 0.1;
  double rotation_min = 0.0;
  double rotation_max = 1.0;
  double deviation_min = 0.0;
  double deviation_max = 1.0;
  std::vector<ActionTypeSpec> action_types = {{"105B", 1.6, 1}, {"205C", 2.0, -1}, {"305B", 2.4, 1}};

  void validate() const;
};

// Scripted motion of one synthetic dive.
struct MotionParams {
  double rotation = 0.5;   // normalized somersault speed
  double deviation = 0.5;  // normalized entry angle deviation
  double bob_phase = 0.0;
  std::vector<int> transitions;
};

// Execution quality as a smooth function of the motion parameters.
double synthetic_execution(double rotation, double deviation);
// Bound on |d score / d (rotation, deviation)|_2 for a corpus.
double synthetic_score_lipschitz(const SyntheticConfig& config);

VideoSample render_synthetic(const SyntheticConfig& config, const ActionTypeSpec& type, const MotionParams& motion,
                             std::uint64_t texture_seed, double noise);
Dataset generate_synthetic(const SyntheticConfig& config);

// Row-major run lengths alternating background / foreground, starting with a
// (possibly empty) background run.
std::vector<std::uint32_t> rle_encode(std::span<const std::uint8_t> mask);
std::vector<std::uint8_t> rle_decode(std::span<const std::uint32_t> runs, int height, int width);

// Packed frame file: "FPV1", T, H, W (uint32 LE), then float32 LE [T, H, W, 3].
void write_packed_frames(const std::filesystem::path& path, const VideoSample& sample);
void read_packed_frames(const std::filesystem::path& path, VideoSample& sample);

struct Rejection {
  std::size_t line = 0;
  std::string sample_id;
  std::string reason;
};

struct LoadResult {
  Dataset samples;
  std::vector<Rejection> rejected;
};

// Reads a JSON-lines manifest. Paths inside entries resolve against root.
LoadResult load_annotations(const std::filesystem::path& root, const std::filesystem::path& manifest);
// Writes frames/<id>.fpv plus a manifest with inline RLE masks.
void export_corpus(const Dataset& dataset, const std::filesystem::path& root,
                   const std::string& manifest_name = "manifest.jsonl");

// 8-bit binary PPM/PGM helpers for directory-of-images inputs and mask export.
void write_pgm(const std::filesystem::path& path, std::span<const std::uint8_t> pixels, int height, int width);
std::vector<std::uint8_t> read_pgm(const std::filesystem::path& path, int& height, int& width);
std::vector<std::uint8_t> read_ppm(const std::filesystem::path& path, int& height, int& width);

}  // namespace fineparser
