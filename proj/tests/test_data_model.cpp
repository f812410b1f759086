#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

#include "fineparser/data_model.h"
#include "fineparser/error.h"
#include "fineparser/rng.h"

using namespace fineparser;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("fineparser_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

VideoSample tiny_sample(int frames, int h = 2, int w = 2) {
  VideoSample s;
  s.id = "tiny";
  s.num_frames = frames;
  s.height = h;
  s.width = w;
  s.frames.resize(static_cast<std::size_t>(frames) * h * w * 3);
  for (std::size_t i = 0; i < s.frames.size(); ++i) s.frames[i] = static_cast<float>(i % 7) / 7.0f;
  s.masks.assign(static_cast<std::size_t>(frames) * h * w, 0);
  s.action_type = "A";
  s.difficulty = 2.0;
  s.score = 10.0;
  s.transitions = {frames / 3, 2 * frames / 3};
  return s;
}

SyntheticConfig small_corpus(int count) {
  SyntheticConfig c;
  c.count = count;
  return c;
}

}  // namespace

TEST(Snippetize, DefaultLayoutGivesNineSnippets) {
  const auto s = tiny_sample(96);
  const auto snippets = snippetize(s, SnippetLayout{9, 16, 10});
  ASSERT_EQ(snippets.size(), 9u);
  const std::size_t frame_values = 2 * 2 * 3;
  for (const auto& sn : snippets) EXPECT_EQ(sn.size(), 16 * frame_values);
  // Last snippet covers frames [80, 96).
  EXPECT_TRUE(std::equal(snippets[8].begin(), snippets[8].end(), s.frames.begin() + 80 * frame_values));
}

TEST(Snippetize, SingleSnippetIsWholeVideo) {
  const auto s = tiny_sample(16);
  const auto snippets = snippetize(s, SnippetLayout{1, 16, 10});
  ASSERT_EQ(snippets.size(), 1u);
  EXPECT_EQ(snippets[0], s.frames);
}

TEST(Snippetize, StartsAreArithmetic) {
  const auto s = tiny_sample(36);
  const SnippetLayout layout{3, 16, 10};
  const auto snippets = snippetize(s, layout);
  ASSERT_EQ(snippets.size(), 3u);
  const std::size_t fv = 12;
  for (int i : {0, 1, 2}) {
    EXPECT_EQ(layout.start(i), 10 * i);
    EXPECT_TRUE(std::equal(snippets[i].begin(), snippets[i].end(), s.frames.begin() + 10 * i * fv));
  }
}

TEST(Snippetize, MismatchNamesTheEquation) {
  const auto s = tiny_sample(90);
  try {
    snippetize(s, SnippetLayout{});
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("snippet_len + (N-1)*stride = T"), std::string::npos);
  }
}

TEST(Snippetize, StitchMapAveragesOverlaps) {
  const SnippetLayout layout{9, 16, 10};
  const TimeMap map = stitch_map(layout);
  std::vector<double> weight(96, 0.0);
  std::vector<int> hits(96, 0);
  for (const auto& e : map.entries) {
    weight[e.out] += e.weight;
    ++hits[e.out];
  }
  for (int f = 0; f < 96; ++f) {
    EXPECT_NEAR(weight[f], 1.0, 1e-12);
    int covering = 0;
    for (int i = 0; i < 9; ++i) covering += (f >= 10 * i && f < 10 * i + 16) ? 1 : 0;
    EXPECT_EQ(hits[f], covering) << "frame " << f;
  }
}

TEST(SelectExemplars, ForcedChoice) {
  Dataset pool = {tiny_sample(12), tiny_sample(12)};
  pool[0].id = "q";
  pool[1].id = "z";
  const auto sel = select_exemplars(pool[0], pool, 1, 3);
  ASSERT_EQ(sel.exemplars.size(), 1u);
  EXPECT_EQ(sel.exemplars[0]->id, "z");
  EXPECT_FALSE(sel.with_replacement);
}

TEST(SelectExemplars, ExhaustsExactPool) {
  Dataset pool;
  for (int i = 0; i < 11; ++i) {
    pool.push_back(tiny_sample(12));
    pool.back().id = "s" + std::to_string(i);
  }
  pool.push_back(tiny_sample(12));
  pool.back().id = "other";
  pool.back().action_type = "B";
  const auto sel = select_exemplars(pool[0], pool, 10, 5);
  std::set<std::string> ids;
  for (const auto* e : sel.exemplars) ids.insert(e->id);
  EXPECT_EQ(ids.size(), 10u);
  EXPECT_FALSE(ids.count("s0"));
  EXPECT_FALSE(ids.count("other"));
}

TEST(SelectExemplars, DeterministicUnderSeed) {
  Dataset pool;
  for (int i = 0; i < 21; ++i) {
    pool.push_back(tiny_sample(12));
    pool.back().id = "s" + std::to_string(i);
  }
  const auto a = select_exemplars(pool[0], pool, 10, 99);
  const auto b = select_exemplars(pool[0], pool, 10, 99);
  EXPECT_EQ(a.exemplars, b.exemplars);
  std::set<const VideoSample*> distinct(a.exemplars.begin(), a.exemplars.end());
  EXPECT_EQ(distinct.size(), 10u);
}

TEST(SelectExemplars, ShortPoolFallsBackToReplacement) {
  Dataset pool = {tiny_sample(12), tiny_sample(12), tiny_sample(12)};
  pool[0].id = "q";
  pool[1].id = "a";
  pool[2].id = "b";
  const auto sel = select_exemplars(pool[0], pool, 5, 1);
  EXPECT_TRUE(sel.with_replacement);
  ASSERT_EQ(sel.exemplars.size(), 5u);
  for (const auto* e : sel.exemplars) EXPECT_NE(e->id, "q");
}

TEST(SelectExemplars, NoEligibleIsAnError) {
  Dataset pool = {tiny_sample(12)};
  EXPECT_THROW(select_exemplars(pool[0], pool, 1, 1), DataError);
}

TEST(Split, SeventyFiveTwentyFivePartition) {
  const auto split = split_dataset(200, 0.75, 7);
  EXPECT_EQ(split.train.size(), 150u);
  EXPECT_EQ(split.test.size(), 50u);
  std::set<std::size_t> all(split.train.begin(), split.train.end());
  all.insert(split.test.begin(), split.test.end());
  EXPECT_EQ(all.size(), 200u);
  EXPECT_EQ(split_dataset(200, 0.75, 7).test, split.test);
  EXPECT_NE(split_dataset(200, 0.75, 8).test, split.test);
}

TEST(Synthetic, SamplesSatisfyInvariants) {
  const auto ds = generate_synthetic(small_corpus(6));
  ASSERT_EQ(ds.size(), 6u);
  for (const auto& s : ds) {
    EXPECT_EQ(s.violation(), "") << s.id;
    EXPECT_EQ(s.num_frames, 96);
    EXPECT_EQ(s.transitions.size(), 2u);
  }
  EXPECT_EQ(ds[0].action_type, "105B");
  EXPECT_EQ(ds[1].action_type, "205C");
  EXPECT_EQ(ds[3].action_type, "105B");
}

TEST(Synthetic, RegenerationIsBitIdentical) {
  const auto a = generate_synthetic(small_corpus(4));
  const auto b = generate_synthetic(small_corpus(4));
  EXPECT_EQ(a, b);
  auto other = small_corpus(4);
  other.seed = 8;
  EXPECT_NE(generate_synthetic(other)[0].frames, a[0].frames);
}

TEST(Synthetic, SampleDependsOnlyOnItsIndex) {
  const auto a = generate_synthetic(small_corpus(3));
  const auto b = generate_synthetic(small_corpus(5));
  for (int i = 0; i < 3; ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(Synthetic, EqualMotionGivesEqualScoreWithoutNoise) {
  SyntheticConfig c = small_corpus(0);
  MotionParams m;
  m.rotation = 0.3;
  m.deviation = 0.6;
  m.transitions = {40, 70};
  const auto a = render_synthetic(c, c.action_types[1], m, 11, 0.0);
  const auto b = render_synthetic(c, c.action_types[1], m, 12345, 0.0);
  EXPECT_EQ(a.score, b.score);
  // 2.0 * (4 + 2*0.3 + 3*0.4)
  EXPECT_NEAR(a.score, 2.0 * 5.8, 1e-12);
}

TEST(Synthetic, TakeoffMaskIsBodyEllipseSupport) {
  SyntheticConfig c = small_corpus(0);
  MotionParams m;
  m.bob_phase = 0.7;
  m.transitions = {40, 70};
  const auto s = render_synthetic(c, c.action_types[0], m, 3, 0.0);
  const double W = 32, H = 32, S = 32;
  const double cx = 0.22 * W, cy = (0.24 - 0.03 * std::abs(std::sin(0.7))) * H;
  const double a = 0.14 * S, b = 0.06 * S;  // long axis vertical
  int fg = 0;
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
      const bool inside = (dy * dy) / (a * a) + (dx * dx) / (b * b) <= 1.0 + 1e-9;
      EXPECT_EQ(s.masks[static_cast<std::size_t>(y) * 32 + x], inside ? 1 : 0) << x << "," << y;
      fg += inside;
    }
  }
  EXPECT_GT(fg, 10);
}

TEST(Synthetic, ForegroundIsVisuallyDistinct) {
  const auto s = generate_synthetic(small_corpus(1))[0];
  double in = 0, out = 0;
  std::size_t n_in = 0, n_out = 0;
  for (std::size_t p = 0; p < s.masks.size(); ++p) {
    const double r = s.frames[p * 3];
    if (s.masks[p]) {
      in += r;
      ++n_in;
    } else {
      out += r;
      ++n_out;
    }
  }
  ASSERT_GT(n_in, 0u);
  EXPECT_GT(in / n_in - out / n_out, 0.3);
}

TEST(Synthetic, ScoreIsLipschitzInMotion) {
  const SyntheticConfig c;
  const double bound = synthetic_score_lipschitz(c);
  Rng rng(17);
  const double h = 1e-6;
  for (int i = 0; i < 1000; ++i) {
    const double rot = rng.uniform(0.0, 1.0), dev = rng.uniform(0.0, 1.0);
    for (const auto& t : c.action_types) {
      const double g_r = t.difficulty * (synthetic_execution(rot + h, dev) - synthetic_execution(rot - h, dev)) / (2 * h);
      const double g_d = t.difficulty * (synthetic_execution(rot, dev + h) - synthetic_execution(rot, dev - h)) / (2 * h);
      EXPECT_LE(std::hypot(g_r, g_d), bound + 1e-6);
    }
  }
}

TEST(Synthetic, InvalidConfigRejected) {
  SyntheticConfig c;
  c.height = 0;
  EXPECT_THROW(generate_synthetic(c), ConfigError);
}

TEST(Rle, FixedExamples) {
  const std::vector<std::uint8_t> zeros(4, 0), ones(4, 1);
  EXPECT_EQ(rle_encode(zeros), (std::vector<std::uint32_t>{4}));
  EXPECT_EQ(rle_encode(ones), (std::vector<std::uint32_t>{0, 4}));
  const std::vector<std::uint8_t> mixed = {0, 1, 1, 0};
  EXPECT_EQ(rle_encode(mixed), (std::vector<std::uint32_t>{1, 2, 1}));
}

TEST(Rle, RoundTripOverRandomMasks) {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    Rng rng(seed);
    const double density = rng.uniform();
    std::vector<std::uint8_t> m(64);
    for (auto& v : m) v = rng.uniform() < density ? 1 : 0;
    const auto runs = rle_encode(m);
    std::uint64_t total = 0;
    for (auto r : runs) total += r;
    ASSERT_EQ(total, 64u);
    ASSERT_EQ(rle_decode(runs, 8, 8), m) << "seed " << seed;
  }
}

TEST(Rle, CorruptRecordRejected) {
  const std::vector<std::uint32_t> runs = {1, 2};
  EXPECT_THROW(rle_decode(runs, 2, 2), DataError);
}

TEST(Annotations, EmptyManifestGivesEmptyDataset) {
  const auto dir = scratch_dir("empty");
  std::ofstream(dir / "m.jsonl").close();
  const auto r = load_annotations(dir, dir / "m.jsonl");
  EXPECT_TRUE(r.samples.empty());
  EXPECT_TRUE(r.rejected.empty());
}

TEST(Annotations, ExportLoadRoundTrip) {
  const auto ds = generate_synthetic(small_corpus(4));
  const auto dir = scratch_dir("roundtrip");
  export_corpus(ds, dir);
  const auto r = load_annotations(dir, dir / "manifest.jsonl");
  EXPECT_TRUE(r.rejected.empty());
  EXPECT_EQ(r.samples, ds);
}

TEST(Annotations, NonMonotoneTransitionsRejected) {
  auto ds = generate_synthetic(small_corpus(2));
  const auto dir = scratch_dir("monotone");
  ds[1].transitions = {60, 40};
  export_corpus(ds, dir);
  const auto r = load_annotations(dir, dir / "manifest.jsonl");
  ASSERT_EQ(r.samples.size(), 1u);
  ASSERT_EQ(r.rejected.size(), 1u);
  EXPECT_EQ(r.rejected[0].reason, "transitions not increasing");
  EXPECT_EQ(r.rejected[0].line, 2u);
}

TEST(Annotations, MissingMaskFrameSkipsSample) {
  const auto ds = generate_synthetic(small_corpus(1));
  const auto dir = scratch_dir("maskdir");
  write_packed_frames(dir / "v.fpv", ds[0]);
  fs::create_directories(dir / "masks");
  const std::size_t plane = ds[0].frame_size();
  for (int t = 0; t < 95; ++t) {
    char name[32];
    std::snprintf(name, sizeof name, "%04d.pgm", t);
    std::vector<std::uint8_t> px(plane);
    for (std::size_t p = 0; p < plane; ++p) px[p] = ds[0].masks[t * plane + p] ? 255 : 0;
    write_pgm(dir / "masks" / name, px, 32, 32);
  }
  std::ofstream(dir / "m.jsonl") << R"({"frames_path":"v.fpv","masks":"masks","action_type":"105B",)"
                                 << R"("difficulty":1.6,"score":9,"transitions":[40,70]})" << '\n';
  auto r = load_annotations(dir, dir / "m.jsonl");
  EXPECT_TRUE(r.samples.empty());
  ASSERT_EQ(r.rejected.size(), 1u);
  EXPECT_EQ(r.rejected[0].reason, "missing mask frame 96 of 96");

  // Completing the directory makes the sample load with the original masks.
  std::vector<std::uint8_t> px(plane);
  for (std::size_t p = 0; p < plane; ++p) px[p] = ds[0].masks[95 * plane + p] ? 255 : 0;
  write_pgm(dir / "masks" / "0095.pgm", px, 32, 32);
  r = load_annotations(dir, dir / "m.jsonl");
  ASSERT_EQ(r.samples.size(), 1u);
  EXPECT_EQ(r.samples[0].masks, ds[0].masks);
}

TEST(Annotations, MalformedLineIsFatalWithLineNumber) {
  const auto dir = scratch_dir("malformed");
  std::ofstream(dir / "m.jsonl") << "\n{\"frames_path\": \n";
  try {
    load_annotations(dir, dir / "m.jsonl");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}
