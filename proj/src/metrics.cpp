// Copyright 2026 The fedbat Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "fedbat/metrics.hpp"

#include <cstdio>
#include <fstream>

#include "fedbat/errors.hpp"

namespace fedbat {

namespace {

std::string fmt_loss(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

std::string fmt_acc(double v) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

std::string metrics_csv_header() {
  return "round,algorithm,train_loss,test_acc,uplink_bytes,cum_uplink_bytes,seconds";
}

std::string metrics_csv(const std::vector<RoundRecord>& records,
                        const std::string& algorithm) {
  std::string out = metrics_csv_header() + "\n";
  std::uint64_t cum = 0;
  for (const auto& r : records) {
    cum += r.uplink_bytes_total;
    out += std::to_string(r.round) + "," + algorithm + "," +
           fmt_loss(r.train_loss) + "," + fmt_acc(r.test_accuracy) + "," +
           std::to_string(r.uplink_bytes_total) + "," + std::to_string(cum) +
           ",0.000\n";
  }
  const double last_loss = records.empty() ? 0.0 : records.back().train_loss;
  const double last_acc = records.empty() ? 0.0 : records.back().test_accuracy;
  out += "summary," + algorithm + "," + fmt_loss(last_loss) + "," +
         fmt_acc(last_acc) + "," + std::to_string(cum) + "," +
         std::to_string(cum) + ",0.000\n";
  return out;
}

void write_metrics_csv(const std::vector<RoundRecord>& records,
                       const std::string& algorithm, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("metrics: cannot open '" + path + "' for write");
  out << metrics_csv(records, algorithm);
}

}  // namespace fedbat
