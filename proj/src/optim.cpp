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


#include "attnagg/optim.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"

#include "attnagg/error.hpp"
#include "attnagg/tensor_io.hpp"

namespace attnagg {

namespace {

void CheckSizes(std::size_t param, std::size_t grad, std::size_t state) {
  if (param != grad || param != state) {
    Fail(ErrorCode::kShapeMismatch, "optimizer sizes differ: param " + std::to_string(param) +
                                        ", grad " + std::to_string(grad) + ", state " +
                                        std::to_string(state));
  }
}

Tensor AsTensor(const std::vector<double>& v) { return Tensor::From({v.size()}, v); }

std::vector<double> LoadVector(const std::filesystem::path& path, std::size_t size) {
  auto t = LoadTensor(path);
  if (t.numel() != size) Fail(ErrorCode::kShapeMismatch, "optimizer state size in " + path.string());
  return {t.values().begin(), t.values().end()};
}

}  // namespace

void SgdStep(std::span<double> param, std::span<const double> grad,
             std::vector<double>& velocity, double lr, double momentum, double weight_decay) {
  if (velocity.empty()) velocity.assign(param.size(), 0.0);
  CheckSizes(param.size(), grad.size(), velocity.size());
  for (std::size_t i = 0; i < param.size(); ++i) {
    velocity[i] = momentum * velocity[i] + grad[i] + weight_decay * param[i];
    param[i] -= lr * velocity[i];
  }
}

void AdamStep(std::span<double> param, std::span<const double> grad, std::vector<double>& m,
              std::vector<double>& v, std::uint64_t& step, double lr, double beta1,
              double beta2, double eps, double weight_decay) {
  if (m.empty()) m.assign(param.size(), 0.0);
  if (v.empty()) v.assign(param.size(), 0.0);
  CheckSizes(param.size(), grad.size(), m.size());
  CheckSizes(param.size(), grad.size(), v.size());
  ++step;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i] + weight_decay * param[i];
    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
    v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
    param[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
  }
}

Optimizer::Optimizer(const OptimizerConfig& config, std::vector<ParamEntry> params)
    : config_(config), params_(std::move(params)) {}

void Optimizer::Step(double lr) {
  std::vector<double> zeros;
  for (auto& p : params_) {
    if (!p.tensor.requires_grad()) continue;
    auto values = p.tensor.mutable_values();
    std::span<const double> grad = p.tensor.grad();
    if (grad.empty()) {
      zeros.assign(values.size(), 0.0);
      grad = zeros;
    }
    auto& s = state_[p.name];
    if (config_.kind == OptimizerKind::kSgdMomentum) {
      SgdStep(values, grad, s.first, lr, config_.momentum, config_.weight_decay);
      ++s.step;
    } else {
      AdamStep(values, grad, s.first, s.second, s.step, lr, config_.beta1, config_.beta2,
               config_.eps, config_.weight_decay);
    }
  }
}

void Optimizer::ZeroGrad() {
  for (auto& p : params_) p.tensor.ZeroGrad();
}

void Optimizer::Save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir / "optimizer");
  nlohmann::json j;
  j["kind"] = config_.kind == OptimizerKind::kAdam ? "adam" : "sgd_momentum";
  j["momentum"] = config_.momentum;
  j["weight_decay"] = config_.weight_decay;
  j["beta1"] = config_.beta1;
  j["beta2"] = config_.beta2;
  j["eps"] = config_.eps;
  auto& entries = j["state"];
  entries = nlohmann::json::object();
  for (const auto& [name, s] : state_) {
    nlohmann::json e;
    e["step"] = s.step;
    e["first"] = "optimizer/" + name + ".first.txt";
    SaveTensor(dir / "optimizer" / (name + ".first.txt"), AsTensor(s.first));
    if (!s.second.empty()) {
      e["second"] = "optimizer/" + name + ".second.txt";
      SaveTensor(dir / "optimizer" / (name + ".second.txt"), AsTensor(s.second));
    }
    entries[name] = e;
  }
  std::ofstream out(dir / "optimizer.json");
  out << j.dump(2) << '\n';
  if (!out) Fail(ErrorCode::kIo, "cannot write " + (dir / "optimizer.json").string());
}

void Optimizer::Load(const std::filesystem::path& dir) {
  std::ifstream in(dir / "optimizer.json");
  if (!in) Fail(ErrorCode::kIo, "cannot read " + (dir / "optimizer.json").string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kIo, std::string("optimizer.json: ") + e.what());
  }
  std::map<std::string, std::size_t> sizes;
  for (const auto& p : params_) sizes[p.name] = p.tensor.numel();
  std::map<std::string, State> loaded;
  for (const auto& [name, e] : j.at("state").items()) {
    auto it = sizes.find(name);
    if (it == sizes.end()) Fail(ErrorCode::kIo, "optimizer state for unknown parameter " + name);
    State s;
    s.step = e.at("step").get<std::uint64_t>();
    s.first = LoadVector(dir / e.at("first").get<std::string>(), it->second);
    if (e.contains("second")) {
      s.second = LoadVector(dir / e.at("second").get<std::string>(), it->second);
    }
    loaded[name] = std::move(s);
  }
  state_ = std::move(loaded);
}

bool Optimizer::operator==(const Optimizer& other) const {
  if (state_.size() != other.state_.size()) return false;
  for (const auto& [name, s] : state_) {
    auto it = other.state_.find(name);
    if (it == other.state_.end() || it->second.step != s.step ||
        it->second.first != s.first || it->second.second != s.second) {
      return false;
    }
  }
  return true;
}

PlateauScheduler::PlateauScheduler(double lr, double factor, double floor, std::size_t patience)
    : lr_(lr), factor_(factor), floor_(floor), patience_(patience) {
  if (!(lr > floor && floor >= 0.0)) {
    Fail(ErrorCode::kInvalidConfig, "learning rate must exceed lr_floor >= 0");
  }
  if (!(factor > 1.0)) Fail(ErrorCode::kInvalidConfig, "lr decay factor must exceed 1");
  if (patience == 0) Fail(ErrorCode::kInvalidConfig, "plateau patience must be positive");
}

PlateauScheduler::Action PlateauScheduler::Observe(double metric) {
  if (!best_ || metric > *best_) {
    best_ = metric;
    bad_epochs_ = 0;
    return Action::kKeep;
  }
  if (++bad_epochs_ < patience_) return Action::kKeep;
  bad_epochs_ = 0;
  if (lr_ / factor_ <= floor_) return Action::kStop;
  lr_ /= factor_;
  return Action::kDecayed;
}

void PlateauScheduler::Restore(double lr, std::optional<double> best, std::size_t bad_epochs) {
  lr_ = lr;
  best_ = best;
  bad_epochs_ = bad_epochs;
}

}  // namespace attnagg
