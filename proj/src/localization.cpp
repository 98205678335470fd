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


#include "attnagg/localization.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "attnagg/error.hpp"
#include "attnagg/numeric.hpp"
#include "attnagg/tensor_io.hpp"

namespace attnagg {

namespace {

void WriteFile(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out || !(out << text)) Fail(ErrorCode::kIo, "cannot write " + path.string());
}

double Overlap(double a0, double a1, double b0, double b1) {
  return std::max(0.0, std::min(a1, b1) - std::max(a0, b0));
}

}  // namespace

double MassInRect(std::span<const double> plane, std::size_t h, std::size_t w,
                  std::size_t image_size, const Rect& rect) {
  if (plane.size() != h * w) Fail(ErrorCode::kShapeMismatch, "mask plane size");
  const double ch = static_cast<double>(image_size) / static_cast<double>(h);
  const double cw = static_cast<double>(image_size) / static_cast<double>(w);
  double mass = 0.0;
  for (std::size_t y = 0; y < h; ++y) {
    const double fy = Overlap(y * ch, (y + 1) * ch, rect.y0, rect.y1) / ch;
    if (fy == 0.0) continue;
    for (std::size_t x = 0; x < w; ++x) {
      const double fx = Overlap(x * cw, (x + 1) * cw, rect.x0, rect.x1) / cw;
      mass += plane[y * w + x] * fy * fx;
    }
  }
  return mass;
}

double AreaBaseline(const Rect& rect, std::size_t image_size) {
  return static_cast<double>(rect.area()) / static_cast<double>(image_size * image_size);
}

LocalizationResult Localize(AttributeModel& model, const Dataset& data,
                            std::span<const std::size_t> positions, bool keep_masks,
                            std::size_t batch_size) {
  if (model.attention_scales().empty()) {
    Fail(ErrorCode::kInvalidConfig, "model has no attention masks");
  }
  NoGradGuard no_grad;
  model.SetTraining(false);
  const std::size_t c = data.num_attributes();
  const std::size_t size = data.image_size();
  LocalizationResult result;
  for (std::size_t start = 0; start < positions.size(); start += batch_size) {
    const std::size_t end = std::min(positions.size(), start + batch_size);
    auto batch = MakeBatch(data, positions.subspan(start, end - start));
    auto out = model.Forward(batch.images);
    for (const auto& level : out.levels) {
      const auto& mask = level.attended.mask;
      const std::size_t h = mask.dim(2), w = mask.dim(3);
      for (std::size_t i = 0; i < batch.ids.size(); ++i) {
        const auto& sample = data.samples[positions[start + i]];
        for (std::size_t a = 0; a < c; ++a) {
          auto plane = mask.values().subspan((i * c + a) * h * w, h * w);
          LocalizationRow row;
          row.sample_id = sample.id;
          row.attr = a;
          row.scale = level.scale;
          row.label = sample.labels[a];
          row.prob = StableSigmoid(out.y_final[i * c + a]);
          row.mass = MassInRect(plane, h, w, size, data.spec.cues[a].rect);
          row.baseline = AreaBaseline(data.spec.cues[a].rect, size);
          result.rows.push_back(row);
        }
        if (keep_masks) {
          auto planes = mask.values().subspan(i * c * h * w, c * h * w);
          result.masks.push_back(
              {sample.id, level.scale, h, w, std::vector<double>(planes.begin(), planes.end())});
        }
      }
    }
  }
  return result;
}

LocalizationSummary Summarize(std::span<const LocalizationRow> rows, double threshold) {
  struct Acc {
    double mass = 0.0, baseline = 0.0;
    std::size_t n = 0;
  };
  std::map<std::uint64_t, Acc> per_sample;
  LocalizationSummary s;
  std::size_t tp_rows = 0;
  for (const auto& r : rows) {
    if (r.label != 1 || r.prob < threshold) continue;
    auto& acc = per_sample[r.sample_id];
    acc.mass += r.mass;
    acc.baseline += r.baseline;
    ++acc.n;
    s.mean_mass += r.mass;
    s.mean_baseline += r.baseline;
    ++tp_rows;
  }
  for (const auto& [id, acc] : per_sample) {
    ++s.samples;
    if (acc.mass > acc.baseline) ++s.above;
  }
  if (tp_rows) {
    s.mean_mass /= static_cast<double>(tp_rows);
    s.mean_baseline /= static_cast<double>(tp_rows);
  }
  return s;
}

void WritePgm(const std::filesystem::path& path, std::span<const double> plane, std::size_t h,
              std::size_t w) {
  std::string text = "P2\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  const double scale = static_cast<double>(h * w) * 128.0;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double v = std::clamp(std::round(plane[y * w + x] * scale), 0.0, 255.0);
      if (x) text += ' ';
      text += std::to_string(static_cast<int>(v));
    }
    text += '\n';
  }
  WriteFile(path, text);
}

void ExportMasks(const std::filesystem::path& dir, std::span<const SampleMasks> masks) {
  std::filesystem::create_directories(dir);
  std::string csv = "sample_id,scale,attr,y,x,value\n";
  for (const auto& m : masks) {
    const std::size_t area = m.height * m.width;
    const std::size_t c = m.planes.size() / area;
    for (std::size_t a = 0; a < c; ++a) {
      std::span<const double> plane(m.planes.data() + a * area, area);
      WritePgm(dir / ("mask_s" + std::to_string(m.sample_id) + "_l" + std::to_string(m.scale) +
                      "_a" + std::to_string(a) + ".pgm"),
               plane, m.height, m.width);
      for (std::size_t y = 0; y < m.height; ++y) {
        for (std::size_t x = 0; x < m.width; ++x) {
          csv += std::to_string(m.sample_id) + "," + std::to_string(m.scale) + "," +
                 std::to_string(a) + "," + std::to_string(y) + "," + std::to_string(x) + "," +
                 FormatDouble(plane[y * m.width + x]) + "\n";
        }
      }
    }
  }
  WriteFile(dir / "masks.csv", csv);
}

void WriteLocalizationCsv(const std::filesystem::path& path,
                          std::span<const LocalizationRow> rows) {
  std::string csv = "sample_id,attr,scale,label,prob,mass,baseline\n";
  for (const auto& r : rows) {
    csv += std::to_string(r.sample_id) + "," + std::to_string(r.attr) + "," +
           std::to_string(r.scale) + "," + std::to_string(r.label) + "," + FormatDouble(r.prob) +
           "," + FormatDouble(r.mass) + "," + FormatDouble(r.baseline) + "\n";
  }
  WriteFile(path, csv);
}

}  // namespace attnagg
