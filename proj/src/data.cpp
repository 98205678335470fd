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


#include "attnagg/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "attnagg/error.hpp"
#include "attnagg/tensor_io.hpp"

namespace attnagg {

namespace {

constexpr std::uint64_t kSplitStream = 0x73706c6974ULL;

[[noreturn]] void Invalid(const std::string& msg) { Fail(ErrorCode::kInvalidSpec, msg); }

Texture ParseTexture(const std::string& name) {
  if (name == "solid") return Texture::kSolid;
  if (name == "stripes") return Texture::kStripes;
  if (name == "checker") return Texture::kChecker;
  Invalid("cues: unknown texture '" + name + "'");
}

std::vector<std::string> SplitCsv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream in(line);
  std::string field;
  while (std::getline(in, field, ',')) out.push_back(field);
  return out;
}

std::filesystem::path ImagePath(const std::filesystem::path& dir, std::uint64_t id) {
  return dir / "images" / ("sample_" + std::to_string(id) + ".txt");
}

Dataset Subset(const Dataset& data, std::vector<std::size_t> positions) {
  std::sort(positions.begin(), positions.end(), [&](std::size_t a, std::size_t b) {
    return data.samples[a].id < data.samples[b].id;
  });
  Dataset out;
  out.spec = data.spec;
  out.samples.reserve(positions.size());
  for (auto p : positions) out.samples.push_back(data.samples[p]);
  return out;
}

}  // namespace

std::string TextureName(Texture t) {
  switch (t) {
    case Texture::kSolid: return "solid";
    case Texture::kStripes: return "stripes";
    case Texture::kChecker: return "checker";
  }
  return "?";
}

std::size_t TextureChannel(Texture t) { return static_cast<std::size_t>(t); }

bool TextureOn(Texture t, std::size_t x, std::size_t y) {
  switch (t) {
    case Texture::kSolid: return true;
    case Texture::kStripes: return (y / 2) % 2 == 0;
    case Texture::kChecker: return (x / 2 + y / 2) % 2 == 0;
  }
  return false;
}

void ValidateSpec(const DatasetSpec& spec) {
  if (spec.num_samples == 0) Invalid("num_samples must be positive");
  if (spec.image_size == 0) Invalid("image_size must be positive");
  if (spec.priors.empty()) Invalid("priors must list at least one attribute");
  for (std::size_t c = 0; c < spec.priors.size(); ++c) {
    const double p = spec.priors[c];
    if (!(p > 0.0 && p < 1.0)) {
      Invalid("priors[" + std::to_string(c) + "] = " + FormatDouble(p) +
              " is outside (0, 1)");
    }
  }
  if (spec.cues.size() != spec.priors.size()) {
    Invalid("cues has " + std::to_string(spec.cues.size()) + " entries for " +
            std::to_string(spec.priors.size()) + " priors");
  }
  for (std::size_t c = 0; c < spec.cues.size(); ++c) {
    const auto& r = spec.cues[c].rect;
    if (r.x0 >= r.x1 || r.y0 >= r.y1 || r.x1 > spec.image_size || r.y1 > spec.image_size) {
      Invalid("cues[" + std::to_string(c) + "].rect is empty or outside the image");
    }
    for (std::size_t d = 0; d < c; ++d) {
      if (spec.cues[d].texture == spec.cues[c].texture && spec.cues[d].rect.Overlaps(r)) {
        Invalid("cues[" + std::to_string(d) + "] and cues[" + std::to_string(c) +
                "] share a texture and overlap");
      }
    }
  }
  if (!(spec.noise_std >= 0.0) || !std::isfinite(spec.noise_std)) {
    Invalid("noise_std must be a finite non-negative number");
  }
  if (!(spec.background >= 0.0 && spec.background < 1.0)) {
    Invalid("background must lie in [0, 1)");
  }
  if (!(spec.correlation >= 0.0 && spec.correlation <= 1.0)) {
    Invalid("correlation must lie in [0, 1]");
  }
  if (!(spec.cue_contrast > 0.0 && spec.background + spec.cue_contrast <= 1.0)) {
    Invalid("cue_contrast must be positive with background + cue_contrast <= 1");
  }
  if (spec.distractors > 0) {
    if (spec.distractor_size == 0 || spec.distractor_size > spec.image_size) {
      Invalid("distractor_size must lie in [1, image_size]");
    }
    // Every texture needs at least one admissible position.
    for (Texture t : {Texture::kSolid, Texture::kStripes, Texture::kChecker}) {
      bool found = false;
      const std::size_t last = spec.image_size - spec.distractor_size;
      for (std::size_t y = 0; y <= last && !found; ++y) {
        for (std::size_t x = 0; x <= last && !found; ++x) {
          const Rect r{x, y, x + spec.distractor_size, y + spec.distractor_size};
          found = true;
          for (const auto& cue : spec.cues) {
            if (cue.texture == t && cue.rect.Overlaps(r)) found = false;
          }
        }
      }
      if (!found) Invalid("no room for " + TextureName(t) + " distractors");
    }
  }
}

nlohmann::json SpecToJson(const DatasetSpec& spec) {
  nlohmann::json cues = nlohmann::json::array();
  for (const auto& cue : spec.cues) {
    cues.push_back({{"rect", {cue.rect.x0, cue.rect.y0, cue.rect.x1, cue.rect.y1}},
                    {"texture", TextureName(cue.texture)}});
  }
  return {{"num_samples", spec.num_samples},
          {"image_size", spec.image_size},
          {"num_attributes", spec.num_attributes()},
          {"priors", spec.priors},
          {"cues", cues},
          {"noise_std", spec.noise_std},
          {"background", spec.background},
          {"correlation", spec.correlation},
          {"cue_contrast", spec.cue_contrast},
          {"distractors", spec.distractors},
          {"distractor_size", spec.distractor_size},
          {"seed", spec.seed}};
}

DatasetSpec SpecFromJson(const nlohmann::json& j) {
  if (!j.is_object()) Invalid("dataset spec must be a JSON object");
  DatasetSpec spec;
  std::size_t declared_attributes = 0;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "num_samples") {
        spec.num_samples = value.get<std::size_t>();
      } else if (key == "image_size") {
        spec.image_size = value.get<std::size_t>();
      } else if (key == "num_attributes") {
        declared_attributes = value.get<std::size_t>();
      } else if (key == "priors") {
        spec.priors = value.get<std::vector<double>>();
      } else if (key == "cues") {
        spec.cues.clear();
        for (const auto& cue : value) {
          for (const auto& [ck, cv] : cue.items()) {
            if (ck != "rect" && ck != "texture") Invalid("cues: unknown key '" + ck + "'");
          }
          const auto r = cue.at("rect").get<std::vector<std::size_t>>();
          if (r.size() != 4) Invalid("cues: rect needs four numbers");
          spec.cues.push_back({{r[0], r[1], r[2], r[3]},
                               ParseTexture(cue.at("texture").get<std::string>())});
        }
      } else if (key == "noise_std") {
        spec.noise_std = value.get<double>();
      } else if (key == "background") {
        spec.background = value.get<double>();
      } else if (key == "correlation") {
        spec.correlation = value.get<double>();
      } else if (key == "cue_contrast") {
        spec.cue_contrast = value.get<double>();
      } else if (key == "distractors") {
        spec.distractors = value.get<std::size_t>();
      } else if (key == "distractor_size") {
        spec.distractor_size = value.get<std::size_t>();
      } else if (key == "seed") {
        spec.seed = value.get<std::uint64_t>();
      } else {
        Invalid("unknown dataset spec key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    Invalid(std::string("dataset spec: ") + e.what());
  }
  if (declared_attributes != 0 && declared_attributes != spec.priors.size()) {
    Invalid("num_attributes disagrees with the length of priors");
  }
  ValidateSpec(spec);
  return spec;
}

std::vector<std::uint8_t> Dataset::LabelMatrix() const {
  std::vector<std::uint8_t> out;
  out.reserve(samples.size() * num_attributes());
  for (const auto& s : samples) out.insert(out.end(), s.labels.begin(), s.labels.end());
  return out;
}

const Sample& Dataset::Find(std::uint64_t id) const {
  for (const auto& s : samples) {
    if (s.id == id) return s;
  }
  Fail(ErrorCode::kUnknownSample, "no sample with id " + std::to_string(id));
}

std::vector<std::uint8_t> DrawLabels(const DatasetSpec& spec, Rng& rng) {
  const double shared = rng.Uniform();
  std::vector<std::uint8_t> labels(spec.num_attributes());
  for (std::size_t c = 0; c < labels.size(); ++c) {
    const bool use_shared = rng.Uniform() < spec.correlation;
    const double u = rng.Uniform();
    labels[c] = (use_shared ? shared : u) < spec.priors[c] ? 1 : 0;
  }
  return labels;
}

std::vector<Patch> DrawDistractors(const DatasetSpec& spec, Rng& rng) {
  std::vector<Patch> out;
  const std::size_t d = spec.distractor_size;
  const std::size_t positions = spec.image_size - d + 1;
  for (std::size_t i = 0; i < spec.distractors; ++i) {
    Patch p;
    p.texture = static_cast<Texture>(rng.Below(3));
    // Rejection sampling; ValidateSpec guarantees an admissible position.
    while (true) {
      const auto x = static_cast<std::size_t>(rng.Below(positions));
      const auto y = static_cast<std::size_t>(rng.Below(positions));
      p.rect = {x, y, x + d, y + d};
      bool clear = true;
      for (const auto& cue : spec.cues) {
        if (cue.texture == p.texture && cue.rect.Overlaps(p.rect)) clear = false;
      }
      if (clear) break;
    }
    out.push_back(p);
  }
  return out;
}

std::vector<double> RenderClean(const DatasetSpec& spec, std::span<const std::uint8_t> labels,
                                std::span<const Patch> distractors) {
  const std::size_t s = spec.image_size;
  const double on = spec.background + spec.cue_contrast;
  std::vector<double> image(kImageChannels * s * s, spec.background);
  auto paint = [&](const Rect& rect, Texture texture) {
    const std::size_t ch = TextureChannel(texture);
    for (std::size_t y = rect.y0; y < rect.y1; ++y) {
      for (std::size_t x = rect.x0; x < rect.x1; ++x) {
        if (TextureOn(texture, x, y)) image[(ch * s + y) * s + x] = on;
      }
    }
  };
  for (const auto& p : distractors) paint(p.rect, p.texture);
  for (std::size_t c = 0; c < labels.size(); ++c) {
    if (labels[c]) paint(spec.cues[c].rect, spec.cues[c].texture);
  }
  return image;
}

Dataset Generate(const DatasetSpec& spec) {
  ValidateSpec(spec);
  Dataset data;
  data.spec = spec;
  data.samples.resize(spec.num_samples);
  for (std::size_t i = 0; i < spec.num_samples; ++i) {
    Rng rng = Rng::Derive(spec.seed, i);
    auto& sample = data.samples[i];
    sample.id = i;
    sample.labels = DrawLabels(spec, rng);
    const auto distractors = DrawDistractors(spec, rng);
    sample.image = RenderClean(spec, sample.labels, distractors);
    for (auto& v : sample.image) {
      v = std::clamp(v + spec.noise_std * rng.Normal(), 0.0, 1.0);
    }
  }
  return data;
}

std::vector<double> PriorsFrom(std::span<const std::uint8_t> labels, std::size_t num_attributes) {
  if (num_attributes == 0 || labels.size() % num_attributes != 0 || labels.empty()) {
    Fail(ErrorCode::kShapeMismatch, "label matrix is empty or ragged");
  }
  const std::size_t n = labels.size() / num_attributes;
  std::vector<double> priors(num_attributes, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < num_attributes; ++c) priors[c] += labels[i * num_attributes + c];
  }
  for (auto& p : priors) p /= static_cast<double>(n);
  return priors;
}

std::vector<std::string> ImbalanceRatios(std::span<const std::uint8_t> labels,
                                         std::size_t num_attributes) {
  if (num_attributes == 0 || labels.size() % num_attributes != 0) {
    Fail(ErrorCode::kShapeMismatch, "label matrix is ragged");
  }
  const std::size_t n = labels.size() / num_attributes;
  std::vector<std::string> out;
  for (std::size_t c = 0; c < num_attributes; ++c) {
    std::size_t pos = 0;
    for (std::size_t i = 0; i < n; ++i) pos += labels[i * num_attributes + c];
    if (pos == 0) Fail(ErrorCode::kNoPositives, "attribute " + std::to_string(c) + " has no positives");
    const double k = std::round(static_cast<double>(n - pos) / static_cast<double>(pos));
    out.push_back("1:" + std::to_string(static_cast<long long>(k)));
  }
  return out;
}

Splits Split(const Dataset& data, double train, double val, double test, std::uint64_t seed) {
  if (!(train >= 0.0 && val >= 0.0 && test >= 0.0) ||
      std::abs(train + val + test - 1.0) > 1e-9) {
    Fail(ErrorCode::kBadFractions, "split fractions must be non-negative and sum to 1");
  }
  const std::size_t n = data.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = Rng::Derive(seed, kSplitStream);
  rng.Shuffle(std::span<std::size_t>(order));
  const auto n_train = std::min(n, static_cast<std::size_t>(std::llround(train * n)));
  const auto n_val = std::min(n - n_train, static_cast<std::size_t>(std::llround(val * n)));
  Splits out;
  out.train = Subset(data, {order.begin(), order.begin() + n_train});
  out.val = Subset(data, {order.begin() + n_train, order.begin() + n_train + n_val});
  out.test = Subset(data, {order.begin() + n_train + n_val, order.end()});
  return out;
}

void SaveDataset(const Dataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "images");
  {
    std::ofstream out(dir / "spec.json");
    out << SpecToJson(data.spec).dump(2) << '\n';
    if (!out) Fail(ErrorCode::kIo, "cannot write " + (dir / "spec.json").string());
  }
  std::ofstream labels(dir / "labels.csv");
  std::ofstream cues(dir / "cues.csv");
  labels << "sample_id";
  for (std::size_t c = 0; c < data.num_attributes(); ++c) labels << ",attr_" << c;
  labels << '\n';
  cues << "sample_id,attr,x0,y0,x1,y1\n";
  const std::size_t s = data.image_size();
  for (const auto& sample : data.samples) {
    labels << sample.id;
    for (auto l : sample.labels) labels << ',' << static_cast<int>(l);
    labels << '\n';
    for (std::size_t c = 0; c < sample.labels.size(); ++c) {
      if (!sample.labels[c]) continue;
      const auto& r = data.spec.cues[c].rect;
      cues << sample.id << ',' << c << ',' << r.x0 << ',' << r.y0 << ',' << r.x1 << ','
           << r.y1 << '\n';
    }
    SaveTensor(ImagePath(dir, sample.id), Tensor::From({kImageChannels, s, s}, sample.image));
  }
  if (!labels || !cues) Fail(ErrorCode::kIo, "cannot write dataset tables in " + dir.string());
}

Dataset LoadDataset(const std::filesystem::path& dir) {
  std::ifstream spec_in(dir / "spec.json");
  if (!spec_in) Fail(ErrorCode::kIo, "no dataset at " + dir.string());
  nlohmann::json j;
  try {
    spec_in >> j;
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kIo, std::string("spec.json: ") + e.what());
  }
  Dataset data;
  data.spec = SpecFromJson(j);
  const std::size_t c = data.num_attributes();
  const std::size_t s = data.image_size();
  std::ifstream labels(dir / "labels.csv");
  std::string line;
  if (!std::getline(labels, line)) Fail(ErrorCode::kIo, "labels.csv missing or empty");
  while (std::getline(labels, line)) {
    if (line.empty()) continue;
    auto fields = SplitCsv(line);
    if (fields.size() != c + 1) Fail(ErrorCode::kIo, "labels.csv row has wrong width: " + line);
    Sample sample;
    sample.id = std::stoull(fields[0]);
    for (std::size_t a = 0; a < c; ++a) {
      if (fields[a + 1] != "0" && fields[a + 1] != "1") {
        Fail(ErrorCode::kNonBinaryLabel, "labels.csv value '" + fields[a + 1] + "'");
      }
      sample.labels.push_back(fields[a + 1] == "1" ? 1 : 0);
    }
    auto image = LoadTensor(ImagePath(dir, sample.id));
    if (image.shape() != Shape{kImageChannels, s, s}) {
      Fail(ErrorCode::kShapeMismatch, "image of sample " + std::to_string(sample.id) +
                                          " has shape " + ShapeToString(image.shape()));
    }
    sample.image.assign(image.values().begin(), image.values().end());
    data.samples.push_back(std::move(sample));
  }
  return data;
}

Batch MakeBatch(const Dataset& data, std::span<const std::size_t> positions,
                const Augmentation& aug, Rng* rng) {
  const std::size_t b = positions.size();
  const std::size_t s = data.image_size();
  const std::size_t c = data.num_attributes();
  const std::size_t plane = s * s;
  std::vector<double> images(b * kImageChannels * plane);
  std::vector<double> labels(b * c);
  Batch batch;
  for (std::size_t i = 0; i < b; ++i) {
    const auto& sample = data.samples.at(positions[i]);
    batch.ids.push_back(sample.id);
    for (std::size_t a = 0; a < c; ++a) labels[i * c + a] = sample.labels[a];
    double* dst = images.data() + i * kImageChannels * plane;
    const bool augment = (aug.mirror || aug.max_shift > 0) && rng != nullptr;
    if (!augment) {
      std::copy(sample.image.begin(), sample.image.end(), dst);
      continue;
    }
    const bool flip = aug.mirror && rng->Uniform() < 0.5;
    const long span = static_cast<long>(2 * aug.max_shift + 1);
    const long dx = static_cast<long>(rng->Below(span)) - static_cast<long>(aug.max_shift);
    const long dy = static_cast<long>(rng->Below(span)) - static_cast<long>(aug.max_shift);
    for (std::size_t ch = 0; ch < kImageChannels; ++ch) {
      for (std::size_t y = 0; y < s; ++y) {
        for (std::size_t x = 0; x < s; ++x) {
          const long sx0 = static_cast<long>(flip ? s - 1 - x : x) - dx;
          const long sy = static_cast<long>(y) - dy;
          double v = 0.0;
          if (sx0 >= 0 && sy >= 0 && sx0 < static_cast<long>(s) && sy < static_cast<long>(s)) {
            v = sample.image[ch * plane + sy * s + sx0];
          }
          dst[ch * plane + y * s + x] = v;
        }
      }
    }
  }
  batch.images = Tensor::From({b, kImageChannels, s, s}, std::move(images));
  batch.labels = Tensor::From({b, c}, std::move(labels));
  return batch;
}

}  // namespace attnagg
