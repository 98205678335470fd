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


#include "attnagg/ablation.hpp"

#include <cmath>
#include <limits>

#include "attnagg/tensor_io.hpp"

namespace attnagg {

std::vector<AblationRow> DefaultAblationRows() {
  return {{false, false, false, false},
          {true, false, false, false},
          {true, true, false, false},
          {true, true, true, false},
          {true, true, true, true}};
}

TrainConfig ApplyRow(const TrainConfig& base, const AblationRow& row, std::uint64_t seed) {
  TrainConfig c = base;
  c.use_weighted_focal = row.weighted_focal;
  c.use_attention = row.attention;
  c.use_attention_loss = row.attention_loss;
  c.use_multiscale = row.multiscale;
  c.seed = seed;
  return c;
}

std::vector<AblationResult> RunAblation(const TrainConfig& base, const Dataset& train,
                                        const Dataset& val, const std::vector<AblationRow>& rows,
                                        const std::vector<std::uint64_t>& seeds,
                                        const AblationHook& hook) {
  std::vector<AblationResult> results;
  for (const auto& row : rows) {
    for (auto seed : seeds) {
      Trainer trainer(ApplyRow(base, row, seed), train, val);
      trainer.Fit();
      const auto& report = trainer.records().back().val;
      AblationResult r;
      r.row = row;
      r.seed = seed;
      r.map = report.map;
      r.f1 = report.example.f1;
      r.ap.assign(train.num_attributes(), std::numeric_limits<double>::quiet_NaN());
      for (std::size_t k = 0; k < report.attributes.size(); ++k) {
        r.ap[report.attributes[k]] = report.ap[k];
      }
      results.push_back(std::move(r));
      if (hook) hook(row, seed, trainer);
    }
  }
  return results;
}

std::string AblationCsv(const std::vector<AblationResult>& results) {
  std::string csv = "Lw,Attention,La,Multiscale,seed,map,f1\n";
  auto flag = [](bool b) { return b ? std::string("1") : std::string("0"); };
  for (const auto& r : results) {
    csv += flag(r.row.weighted_focal) + "," + flag(r.row.attention) + "," +
           flag(r.row.attention_loss) + "," + flag(r.row.multiscale) + "," +
           std::to_string(r.seed) + "," + FormatDouble(r.map) + "," + FormatDouble(r.f1) + "\n";
  }
  return csv;
}

}  // namespace attnagg
