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


// Where attention masks put their mass relative to the planted cue
// rectangles, and mask export as PGM images and CSV.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "attnagg/data.hpp"
#include "attnagg/model.hpp"

namespace attnagg {

// Mass of an [h x w] mask plane inside a pixel rectangle of an image of
// side image_size. Each cell contributes in proportion to the fraction of
// its footprint that the rectangle covers.
double MassInRect(std::span<const double> plane, std::size_t h, std::size_t w,
                  std::size_t image_size, const Rect& rect);

// rect area / image area: the in-cue mass of a uniform mask.
double AreaBaseline(const Rect& rect, std::size_t image_size);

struct LocalizationRow {
  std::uint64_t sample_id = 0;
  std::size_t attr = 0;
  std::size_t scale = 0;
  std::uint8_t label = 0;
  double prob = 0.0;  // sigmoid of the aggregated logit
  double mass = 0.0;
  double baseline = 0.0;
};

struct SampleMasks {
  std::uint64_t sample_id = 0;
  std::size_t scale = 0;
  std::size_t height = 0, width = 0;
  std::vector<double> planes;  // [C x h x w] normalized masks
};

struct LocalizationResult {
  std::vector<LocalizationRow> rows;
  std::vector<SampleMasks> masks;  // only filled when requested
};

// Eval-mode masks for the given sample positions. The model must have
// attention branches.
LocalizationResult Localize(AttributeModel& model, const Dataset& data,
                            std::span<const std::size_t> positions, bool keep_masks = false,
                            std::size_t batch_size = 32);

struct LocalizationSummary {
  std::size_t samples = 0;  // samples with at least one true positive
  std::size_t above = 0;    // of those, mean in-cue mass above the baseline
  double mean_mass = 0.0;   // over true-positive rows
  double mean_baseline = 0.0;
  double fraction() const { return samples ? static_cast<double>(above) / samples : 0.0; }
};

// True positives are attributes with label 1 and prob >= threshold. A
// sample's score averages its true-positive rows over attributes and
// scales, as does its baseline.
LocalizationSummary Summarize(std::span<const LocalizationRow> rows, double threshold = 0.5);

// Greyscale P2 image, value = mask * h * w * 128 clamped to [0, 255].
void WritePgm(const std::filesystem::path& path, std::span<const double> plane, std::size_t h,
              std::size_t w);
// mask_s{sample}_l{scale}_a{attr}.pgm for every plane, and masks.csv with
// `sample_id,scale,attr,y,x,value`.
void ExportMasks(const std::filesystem::path& dir, std::span<const SampleMasks> masks);
void WriteLocalizationCsv(const std::filesystem::path& path,
                          std::span<const LocalizationRow> rows);

}  // namespace attnagg
