/*
 * Copyright 2026 The attnagg Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "attnagg/data.hpp"
#include "attnagg/metrics.hpp"
#include "test_util.hpp"

namespace attnagg {
namespace {

using testing::CaptureError;

DatasetSpec Small(std::size_t n = 200) {
  DatasetSpec s;
  s.num_samples = n;
  return s;
}

std::size_t Positives(const Dataset& d, std::size_t attr) {
  std::size_t n = 0;
  for (const auto& s : d.samples) n += s.labels[attr];
  return n;
}

TEST(GenerateTest, PositiveRatesWithinBinomialBounds) {
  auto spec = Small(5000);
  auto data = Generate(spec);
  ASSERT_EQ(data.size(), 5000u);
  for (std::size_t a = 0; a < spec.priors.size(); ++a) {
    const double p = spec.priors[a];
    const double half = 3.0 * std::sqrt(p * (1 - p) * 5000.0);
    const double count = static_cast<double>(Positives(data, a));
    EXPECT_GE(count, 5000.0 * p - half) << a;
    EXPECT_LE(count, 5000.0 * p + half) << a;
  }
  const double c3 = static_cast<double>(Positives(data, 3));
  EXPECT_GE(c3, 436.0);
  EXPECT_LE(c3, 564.0);
}

TEST(GenerateTest, Deterministic) {
  auto a = Generate(Small(50));
  auto b = Generate(Small(50));
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.samples[i].id, b.samples[i].id);
    EXPECT_EQ(a.samples[i].labels, b.samples[i].labels);
    EXPECT_EQ(a.samples[i].image, b.samples[i].image);
  }
  auto spec = Small(50);
  spec.seed = 8;
  EXPECT_NE(Generate(spec).samples[0].image, a.samples[0].image);
}

TEST(GenerateTest, PixelsInUnitRange) {
  auto data = Generate(Small(30));
  for (const auto& s : data.samples) {
    ASSERT_EQ(s.image.size(), 3u * 32 * 32);
    for (double v : s.image) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
  }
}

TEST(ValidateSpecTest, Rejections) {
  auto expect_invalid = [](auto mutate) {
    DatasetSpec s;
    mutate(s);
    EXPECT_EQ(CaptureError([&] { ValidateSpec(s); }), ErrorCode::kInvalidSpec);
  };
  expect_invalid([](DatasetSpec& s) { s.priors[2] = 0.0; });
  expect_invalid([](DatasetSpec& s) { s.priors[2] = 1.0; });
  expect_invalid([](DatasetSpec& s) { s.num_samples = 0; });
  expect_invalid([](DatasetSpec& s) { s.noise_std = -0.1; });
  expect_invalid([](DatasetSpec& s) { s.cues[0].rect = {28, 0, 36, 8}; });
  expect_invalid([](DatasetSpec& s) { s.cues[0].rect = {5, 5, 5, 9}; });
  expect_invalid([](DatasetSpec& s) { s.cues.pop_back(); });
  expect_invalid([](DatasetSpec& s) { s.cues[3].rect = s.cues[0].rect; });
  expect_invalid([](DatasetSpec& s) { s.correlation = 1.5; });
  DatasetSpec ok;
  ok.cues[4].rect = ok.cues[0].rect;  // different textures may share space
  ValidateSpec(ok);
}

TEST(SpecJsonTest, RoundTripAndStrictKeys) {
  DatasetSpec s;
  s.noise_std = 0.05;
  s.seed = 123456789012345ull;
  auto back = SpecFromJson(SpecToJson(s));
  EXPECT_EQ(SpecToJson(back), SpecToJson(s));
  auto j = SpecToJson(s);
  j["bogus"] = 1;
  EXPECT_EQ(CaptureError([&] { SpecFromJson(j); }), ErrorCode::kInvalidSpec);
}

// Independent rendering rule: for each cue, the texture's channel inside the
// rectangle shows the on-pattern (background + contrast) or plain background.
bool TemplatePresent(const DatasetSpec& spec, const std::vector<double>& clean,
                     const CueSpec& cue) {
  const std::size_t n = spec.image_size;
  const std::size_t ch = cue.texture == Texture::kSolid ? 0 : cue.texture == Texture::kStripes ? 1 : 2;
  bool all_on = true, any_on = false;
  for (std::size_t y = cue.rect.y0; y < cue.rect.y1; ++y) {
    for (std::size_t x = cue.rect.x0; x < cue.rect.x1; ++x) {
      bool pattern = true;
      if (cue.texture == Texture::kStripes) pattern = (y / 2) % 2 == 0;
      if (cue.texture == Texture::kChecker) pattern = (x / 2 + y / 2) % 2 == 0;
      const double v = clean[(ch * n + y) * n + x];
      if (pattern) {
        const bool lit = std::abs(v - (spec.background + spec.cue_contrast)) < 1e-12;
        all_on &= lit;
        any_on |= lit;
      } else if (std::abs(v - spec.background) > 1e-12) {
        all_on = false;
      }
    }
  }
  EXPECT_TRUE(all_on || !any_on) << "partial texture";
  return all_on;
}

TEST(CueFaithfulnessTest, CleanLayerMatchesLabels) {
  auto spec = Small(300);
  for (std::uint64_t i = 0; i < spec.num_samples; ++i) {
    auto rng = Rng::Derive(spec.seed, i);
    auto labels = DrawLabels(spec, rng);
    auto patches = DrawDistractors(spec, rng);
    auto clean = RenderClean(spec, labels, patches);
    for (std::size_t a = 0; a < spec.cues.size(); ++a) {
      ASSERT_EQ(TemplatePresent(spec, clean, spec.cues[a]), labels[a] == 1) << i << " " << a;
    }
  }
}

TEST(CueFaithfulnessTest, GeneratedLabelsMatchDraws) {
  auto spec = Small(40);
  auto data = Generate(spec);
  for (const auto& s : data.samples) {
    auto rng = Rng::Derive(spec.seed, s.id);
    EXPECT_EQ(DrawLabels(spec, rng), s.labels);
  }
}

TEST(LearnabilityTest, CueIntensityProbe) {
  auto spec = Small(1000);
  spec.noise_std = 0.1;
  auto data = Generate(spec);
  const std::size_t n = spec.image_size;
  for (std::size_t a = 0; a < spec.cues.size(); ++a) {
    const auto& cue = spec.cues[a];
    const std::size_t ch = TextureChannel(cue.texture);
    std::vector<double> feature;
    std::vector<std::uint8_t> labels;
    for (const auto& s : data.samples) {
      double sum = 0.0;
      for (std::size_t y = cue.rect.y0; y < cue.rect.y1; ++y) {
        for (std::size_t x = cue.rect.x0; x < cue.rect.x1; ++x) sum += s.image[(ch * n + y) * n + x];
      }
      feature.push_back(sum / static_cast<double>(cue.rect.area()));
      labels.push_back(s.labels[a]);
    }
    // One-dimensional logistic regression by Newton steps.
    double mean = 0.0;
    for (double f : feature) mean += f;
    mean /= feature.size();
    double w = 0.0, b = 0.0;
    for (int it = 0; it < 25; ++it) {
      double gw = 0, gb = 0, hww = 1e-9, hwb = 0, hbb = 1e-9;
      for (std::size_t i = 0; i < feature.size(); ++i) {
        const double x = (feature[i] - mean) * 10.0;
        const double p = 1.0 / (1.0 + std::exp(-(w * x + b)));
        gw += (p - labels[i]) * x;
        gb += p - labels[i];
        const double h = p * (1 - p);
        hww += h * x * x;
        hwb += h * x;
        hbb += h;
      }
      const double det = hww * hbb - hwb * hwb;
      w -= (hbb * gw - hwb * gb) / det;
      b -= (hww * gb - hwb * gw) / det;
      w = std::clamp(w, -50.0, 50.0);
      b = std::clamp(b, -50.0, 50.0);
    }
    std::vector<double> scores;
    for (double f : feature) scores.push_back(w * (f - mean) * 10.0 + b);
    EXPECT_GE(AveragePrecision(scores, labels), 0.95) << a;
  }
}

TEST(PriorsTest, Examples) {
  std::vector<std::uint8_t> one = {1, 0, 1, 0};
  EXPECT_EQ(PriorsFrom(one, 1), (std::vector<double>{0.5}));
  std::vector<std::uint8_t> zeros(6, 0);
  EXPECT_EQ(PriorsFrom(zeros, 2), (std::vector<double>{0.0, 0.0}));
  Rng rng(31);
  std::vector<std::uint8_t> labels(400 * 3);
  for (auto& v : labels) v = rng.Uniform() < 0.3;
  auto priors = PriorsFrom(labels, 3);
  for (std::size_t a = 0; a < 3; ++a) {
    int count = 0;
    for (std::size_t i = 0; i < 400; ++i) count += labels[i * 3 + a];
    EXPECT_EQ(priors[a], count / 400.0);
  }
}

std::vector<std::uint8_t> Column(std::size_t pos, std::size_t neg) {
  std::vector<std::uint8_t> v(pos, 1);
  v.insert(v.end(), neg, 0);
  return v;
}

TEST(ImbalanceRatioTest, Examples) {
  EXPECT_EQ(ImbalanceRatios(Column(250, 750), 1), (std::vector<std::string>{"1:3"}));
  EXPECT_EQ(ImbalanceRatios(Column(500, 500), 1), (std::vector<std::string>{"1:1"}));
  EXPECT_EQ(ImbalanceRatios(Column(37, 1034), 1), (std::vector<std::string>{"1:28"}));
  EXPECT_EQ(CaptureError([] { ImbalanceRatios(Column(0, 10), 1); }), ErrorCode::kNoPositives);
}

TEST(SplitTest, SizesPartitionDeterminism) {
  auto data = Generate(Small(1000));
  auto s = Split(data, 0.8, 0.1, 0.1, 5);
  EXPECT_EQ(s.train.size(), 800u);
  EXPECT_EQ(s.val.size(), 100u);
  EXPECT_EQ(s.test.size(), 100u);
  std::set<std::uint64_t> all;
  for (const auto* part : {&s.train, &s.val, &s.test}) {
    for (const auto& x : part->samples) EXPECT_TRUE(all.insert(x.id).second) << x.id;
  }
  EXPECT_EQ(all.size(), 1000u);
  EXPECT_EQ(*all.rbegin(), 999u);
  auto again = Split(data, 0.8, 0.1, 0.1, 5);
  for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(again.val.samples[i].id, s.val.samples[i].id);
  auto other = Split(data, 0.8, 0.1, 0.1, 6);
  bool differs = false;
  for (std::size_t i = 0; i < 100; ++i) differs |= other.val.samples[i].id != s.val.samples[i].id;
  EXPECT_TRUE(differs);
  EXPECT_EQ(CaptureError([&] { Split(data, 0.8, 0.1, 0.2, 5); }), ErrorCode::kBadFractions);
  EXPECT_EQ(CaptureError([&] { Split(data, 1.1, -0.1, 0.0, 5); }), ErrorCode::kBadFractions);
}

TEST(DatasetIoTest, RoundTripIsBitExact) {
  const auto dir = testing::ScratchDir("data");
  auto data = Generate(Small(12));
  SaveDataset(data, dir);
  EXPECT_TRUE(std::filesystem::exists(dir / "spec.json"));
  EXPECT_TRUE(std::filesystem::exists(dir / "labels.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "cues.csv"));
  auto back = LoadDataset(dir);
  EXPECT_EQ(SpecToJson(back.spec), SpecToJson(data.spec));
  ASSERT_EQ(back.size(), data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    EXPECT_EQ(back.samples[i].id, data.samples[i].id);
    EXPECT_EQ(back.samples[i].labels, data.samples[i].labels);
    EXPECT_EQ(back.samples[i].image, data.samples[i].image);
  }
  std::filesystem::remove_all(dir);
}

TEST(BatchTest, GatherAndMirror) {
  auto data = Generate(Small(5));
  std::vector<std::size_t> pos = {3, 1};
  auto b = MakeBatch(data, pos);
  EXPECT_EQ(b.images.shape(), (Shape{2, 3, 32, 32}));
  EXPECT_EQ(b.ids, (std::vector<std::uint64_t>{3, 1}));
  for (std::size_t c = 0; c < 6; ++c) EXPECT_EQ(b.labels[6 + c], data.samples[1].labels[c]);
  EXPECT_EQ(b.images[0], data.samples[3].image[0]);

  Augmentation aug;
  aug.mirror = true;
  // Over a few draws some images come back mirrored and none are altered otherwise.
  Rng rng(4);
  bool mirrored = false;
  for (int t = 0; t < 10; ++t) {
    auto m = MakeBatch(data, pos, aug, &rng);
    const auto& src = data.samples[3].image;
    bool same = true, flipped = true;
    for (std::size_t y = 0; y < 32; ++y) {
      for (std::size_t x = 0; x < 32; ++x) {
        same &= m.images[y * 32 + x] == src[y * 32 + x];
        flipped &= m.images[y * 32 + x] == src[y * 32 + 31 - x];
      }
    }
    EXPECT_TRUE(same || flipped);
    mirrored |= flipped && !same;
  }
  EXPECT_TRUE(mirrored);
}

}  // namespace
}  // namespace attnagg
