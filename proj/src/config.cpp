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


#include <string>

#include "attnagg/error.hpp"
#include "attnagg/trainer.hpp"

namespace attnagg {

namespace {

using nlohmann::json;

[[noreturn]] void Invalid(const std::string& msg) { Fail(ErrorCode::kInvalidConfig, msg); }

json ConvSpecsToJson(const std::vector<ConvSpec>& specs) {
  json out = json::array();
  for (const auto& s : specs) {
    out.push_back({{"out_channels", s.out_channels}, {"kernel", s.kernel}, {"stride", s.stride}});
  }
  return out;
}

std::vector<ConvSpec> ConvSpecsFromJson(const json& j, const std::string& field) {
  if (!j.is_array()) Invalid(field + " must be an array");
  std::vector<ConvSpec> out;
  for (const auto& e : j) {
    ConvSpec s;
    for (const auto& [k, v] : e.items()) {
      if (k == "out_channels") {
        s.out_channels = v.get<std::size_t>();
      } else if (k == "kernel") {
        s.kernel = v.get<std::size_t>();
      } else if (k == "stride") {
        s.stride = v.get<std::size_t>();
      } else {
        Invalid(field + ": unknown key '" + k + "'");
      }
    }
    out.push_back(s);
  }
  return out;
}

json ModelToJson(const ModelConfig& m) {
  return {{"stage1", ConvSpecsToJson(m.stage1)},
          {"stage2", ConvSpecsToJson(m.stage2)},
          {"attention_channels", m.attention_channels},
          {"classifier_widths", m.classifier_widths},
          {"single_scale", m.single_scale}};
}

ModelConfig ModelFromJson(const json& j) {
  if (!j.is_object()) Invalid("model must be an object");
  ModelConfig m;
  for (const auto& [k, v] : j.items()) {
    if (k == "stage1") {
      m.stage1 = ConvSpecsFromJson(v, "model.stage1");
    } else if (k == "stage2") {
      m.stage2 = ConvSpecsFromJson(v, "model.stage2");
    } else if (k == "attention_channels") {
      m.attention_channels = v.get<std::size_t>();
    } else if (k == "classifier_widths") {
      m.classifier_widths = v.get<std::vector<std::size_t>>();
    } else if (k == "single_scale") {
      m.single_scale = v.get<std::size_t>();
    } else {
      Invalid("model: unknown key '" + k + "'");
    }
  }
  return m;
}

}  // namespace

void ValidateConfig(const TrainConfig& c) {
  if (!(c.lr > c.lr_floor && c.lr_floor >= 0.0)) Invalid("lr must exceed lr_floor >= 0");
  if (!(c.lr_decay_factor > 1.0)) Invalid("lr_decay_factor must exceed 1");
  if (c.batch_size == 0) Invalid("batch_size must be positive");
  if (c.plateau_patience == 0) Invalid("plateau_patience must be positive");
  if (c.history_window == 0) Invalid("history_window must be positive");
  if (!(c.focal_gamma >= 0.0)) Invalid("focal_gamma must be >= 0");
  if (c.use_attention_loss && !c.use_attention) Invalid("use_attention_loss requires use_attention");
  if (c.use_multiscale && !c.use_attention) Invalid("use_multiscale requires use_attention");
  if (c.monitor != "map" && c.monitor != "f1") Invalid("monitor must be \"map\" or \"f1\"");
  if (!(c.optimizer.momentum >= 0.0 && c.optimizer.momentum < 1.0)) {
    Invalid("momentum must lie in [0, 1)");
  }
  if (!(c.optimizer.weight_decay >= 0.0)) Invalid("weight_decay must be >= 0");
  if (!(c.optimizer.beta1 >= 0.0 && c.optimizer.beta1 < 1.0) ||
      !(c.optimizer.beta2 >= 0.0 && c.optimizer.beta2 < 1.0) || !(c.optimizer.eps > 0.0)) {
    Invalid("adam betas must lie in [0, 1) and eps must be positive");
  }
}

json ConfigToJson(const TrainConfig& c) {
  return {
      {"optimizer", c.optimizer.kind == OptimizerKind::kAdam ? "adam" : "sgd_momentum"},
      {"lr", c.lr},
      {"momentum", c.optimizer.momentum},
      {"weight_decay", c.optimizer.weight_decay},
      {"adam_beta1", c.optimizer.beta1},
      {"adam_beta2", c.optimizer.beta2},
      {"adam_eps", c.optimizer.eps},
      {"batch_size", c.batch_size},
      {"freeze_epochs", c.freeze_epochs},
      {"max_epochs", c.max_epochs},
      {"lr_decay_factor", c.lr_decay_factor},
      {"lr_floor", c.lr_floor},
      {"plateau_patience", c.plateau_patience},
      {"burn_in_epochs", c.burn_in_epochs},
      {"history_window", c.history_window},
      {"focal_gamma", c.focal_gamma},
      {"variance", c.variance == VarianceKind::kPopulation ? "population" : "bessel"},
      {"std_granularity",
       c.std_granularity == StdGranularity::kPerSample ? "per_sample" : "per_attribute"},
      {"use_weighted_focal", c.use_weighted_focal},
      {"use_attention", c.use_attention},
      {"use_attention_loss", c.use_attention_loss},
      {"use_multiscale", c.use_multiscale},
      {"monitor", c.monitor},
      {"augment_mirror", c.augmentation.mirror},
      {"augment_max_shift", c.augmentation.max_shift},
      {"model", ModelToJson(c.model)},
      {"seed", c.seed},
  };
}

TrainConfig ConfigFromJson(const json& j) {
  if (!j.is_object()) Invalid("training config must be a JSON object");
  TrainConfig c;
  try {
    for (const auto& [k, v] : j.items()) {
      if (k == "optimizer") {
        const auto name = v.get<std::string>();
        if (name == "adam") {
          c.optimizer.kind = OptimizerKind::kAdam;
        } else if (name == "sgd_momentum") {
          c.optimizer.kind = OptimizerKind::kSgdMomentum;
        } else {
          Invalid("optimizer must be \"adam\" or \"sgd_momentum\"");
        }
      } else if (k == "lr") {
        c.lr = v.get<double>();
      } else if (k == "momentum") {
        c.optimizer.momentum = v.get<double>();
      } else if (k == "weight_decay") {
        c.optimizer.weight_decay = v.get<double>();
      } else if (k == "adam_beta1") {
        c.optimizer.beta1 = v.get<double>();
      } else if (k == "adam_beta2") {
        c.optimizer.beta2 = v.get<double>();
      } else if (k == "adam_eps") {
        c.optimizer.eps = v.get<double>();
      } else if (k == "batch_size") {
        c.batch_size = v.get<std::size_t>();
      } else if (k == "freeze_epochs") {
        c.freeze_epochs = v.get<std::size_t>();
      } else if (k == "max_epochs") {
        c.max_epochs = v.get<std::size_t>();
      } else if (k == "lr_decay_factor") {
        c.lr_decay_factor = v.get<double>();
      } else if (k == "lr_floor") {
        c.lr_floor = v.get<double>();
      } else if (k == "plateau_patience") {
        c.plateau_patience = v.get<std::size_t>();
      } else if (k == "burn_in_epochs") {
        c.burn_in_epochs = v.get<std::size_t>();
      } else if (k == "history_window") {
        c.history_window = v.get<std::size_t>();
      } else if (k == "focal_gamma") {
        c.focal_gamma = v.get<double>();
      } else if (k == "variance") {
        const auto name = v.get<std::string>();
        if (name == "population") {
          c.variance = VarianceKind::kPopulation;
        } else if (name == "bessel") {
          c.variance = VarianceKind::kBessel;
        } else {
          Invalid("variance must be \"population\" or \"bessel\"");
        }
      } else if (k == "std_granularity") {
        const auto name = v.get<std::string>();
        if (name == "per_sample") {
          c.std_granularity = StdGranularity::kPerSample;
        } else if (name == "per_attribute") {
          c.std_granularity = StdGranularity::kPerAttribute;
        } else {
          Invalid("std_granularity must be \"per_sample\" or \"per_attribute\"");
        }
      } else if (k == "use_weighted_focal") {
        c.use_weighted_focal = v.get<bool>();
      } else if (k == "use_attention") {
        c.use_attention = v.get<bool>();
      } else if (k == "use_attention_loss") {
        c.use_attention_loss = v.get<bool>();
      } else if (k == "use_multiscale") {
        c.use_multiscale = v.get<bool>();
      } else if (k == "monitor") {
        c.monitor = v.get<std::string>();
      } else if (k == "augment_mirror") {
        c.augmentation.mirror = v.get<bool>();
      } else if (k == "augment_max_shift") {
        c.augmentation.max_shift = v.get<std::size_t>();
      } else if (k == "model") {
        c.model = ModelFromJson(v);
      } else if (k == "seed") {
        c.seed = v.get<std::uint64_t>();
      } else {
        Invalid("unknown training config key '" + k + "'");
      }
    }
  } catch (const json::exception& e) {
    Invalid(std::string("training config: ") + e.what());
  }
  ValidateConfig(c);
  return c;
}

ModelConfig ResolveModelConfig(const TrainConfig& config, const Dataset& data) {
  ModelConfig m = config.model;
  m.input_size = data.image_size();
  m.input_channels = kImageChannels;
  m.num_attributes = data.num_attributes();
  m.use_attention = config.use_attention;
  m.use_multiscale = config.use_multiscale;
  return m;
}

}  // namespace attnagg
