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


// Synthetic multi-label images with planted attribute cues. Each attribute
// owns a rectangle and a texture; the texture is drawn there exactly when
// the attribute is positive. Solid blocks live in channel 0, stripes in
// channel 1 and checkerboards in channel 2.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "attnagg/rng.hpp"
#include "attnagg/tensor.hpp"

namespace attnagg {

enum class Texture { kSolid, kStripes, kChecker };

std::string TextureName(Texture t);
std::size_t TextureChannel(Texture t);
// Whether pixel (x, y) is "on" for the texture. Phases are absolute image
// coordinates: stripes are 2 rows thick, checker cells are 2x2.
bool TextureOn(Texture t, std::size_t x, std::size_t y);

// Half-open pixel rectangle [x0, x1) x [y0, y1).
struct Rect {
  std::size_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  std::size_t area() const { return (x1 - x0) * (y1 - y0); }
  bool Overlaps(const Rect& o) const {
    return x0 < o.x1 && o.x0 < x1 && y0 < o.y1 && o.y0 < y1;
  }
  bool operator==(const Rect&) const = default;
};

struct CueSpec {
  Rect rect;
  Texture texture = Texture::kSolid;
};

struct DatasetSpec {
  std::size_t num_samples = 5000;
  std::size_t image_size = 32;
  std::vector<double> priors = {0.5, 0.3, 0.25, 0.1, 0.06, 0.035};
  std::vector<CueSpec> cues = {
      {{12, 0, 20, 8}, Texture::kSolid},   {{4, 12, 12, 20}, Texture::kStripes},
      {{20, 12, 28, 20}, Texture::kChecker}, {{12, 24, 20, 32}, Texture::kSolid},
      {{16, 4, 24, 12}, Texture::kStripes}, {{4, 24, 12, 32}, Texture::kChecker}};
  double noise_std = 0.25;
  double background = 0.2;
  // "On" texture pixels are background + cue_contrast.
  double cue_contrast = 0.2;
  // Texture patches at random places away from the cue rectangles of the
  // same texture, so that texture presence alone does not give the label.
  std::size_t distractors = 4;
  std::size_t distractor_size = 8;
  // Probability that an attribute reuses the sample's shared latent uniform
  // instead of an independent one. Marginal rates are unaffected.
  double correlation = 0.0;
  std::uint64_t seed = 7;

  std::size_t num_attributes() const { return priors.size(); }
};

inline constexpr std::size_t kImageChannels = 3;

// InvalidSpec with a message naming the offending field.
void ValidateSpec(const DatasetSpec& spec);

nlohmann::json SpecToJson(const DatasetSpec& spec);
// Missing keys keep their defaults; unknown keys and bad values are
// InvalidSpec. The result is validated.
DatasetSpec SpecFromJson(const nlohmann::json& j);

struct Patch {
  Rect rect;
  Texture texture = Texture::kSolid;
};

struct Sample {
  std::uint64_t id = 0;
  std::vector<double> image;         // [3 x H x W]
  std::vector<std::uint8_t> labels;  // [C]
};

struct Dataset {
  DatasetSpec spec;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  std::size_t num_attributes() const { return spec.num_attributes(); }
  std::size_t image_size() const { return spec.image_size; }
  // Row-major [N x C] 0/1 matrix.
  std::vector<std::uint8_t> LabelMatrix() const;
  const Sample& Find(std::uint64_t id) const;  // UnknownSample
};

// Deterministic in the spec; sample i uses the stream Derive(seed, i).
Dataset Generate(const DatasetSpec& spec);
// The per-sample draws, in the order Generate makes them: labels, then
// distractor patches, then pixel noise.
std::vector<std::uint8_t> DrawLabels(const DatasetSpec& spec, Rng& rng);
std::vector<Patch> DrawDistractors(const DatasetSpec& spec, Rng& rng);
// The image before noise.
std::vector<double> RenderClean(const DatasetSpec& spec, std::span<const std::uint8_t> labels,
                                std::span<const Patch> distractors = {});

// a_c = positives_c / N over a row-major [N x C] matrix.
std::vector<double> PriorsFrom(std::span<const std::uint8_t> labels, std::size_t num_attributes);
// "1:k" with k = round(negatives / positives). NoPositives for an attribute
// that has none.
std::vector<std::string> ImbalanceRatios(std::span<const std::uint8_t> labels,
                                         std::size_t num_attributes);

struct Splits {
  Dataset train, val, test;
};

// Train and validation sizes are the rounded fractions of N; test takes the
// rest. BadFractions unless the fractions are non-negative and sum to 1.
Splits Split(const Dataset& data, double train, double val, double test, std::uint64_t seed);

// spec.json, labels.csv, cues.csv and images/sample_<id>.txt.
void SaveDataset(const Dataset& data, const std::filesystem::path& dir);
Dataset LoadDataset(const std::filesystem::path& dir);

struct Augmentation {
  bool mirror = false;
  std::size_t max_shift = 0;  // random translation with zero fill
};

struct Batch {
  Tensor images;  // [B x 3 x H x W]
  Tensor labels;  // [B x C]
  std::vector<std::uint64_t> ids;
};

// Gathers the given sample positions; rng is only drawn from when some
// augmentation is enabled.
Batch MakeBatch(const Dataset& data, std::span<const std::size_t> positions,
                const Augmentation& aug = {}, Rng* rng = nullptr);

}  // namespace attnagg
