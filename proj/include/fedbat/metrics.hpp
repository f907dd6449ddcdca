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

#ifndef FEDBAT_METRICS_HPP
#define FEDBAT_METRICS_HPP

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace fedbat {

struct RoundRecord {
  int round = 0;
  double train_loss = 0.0;
  double test_accuracy = 0.0;
  std::uint64_t uplink_bytes_total = 0;
  // Measured wall time. Kept out of the metrics CSV: the CSV is a
  // deterministic artifact (identical config => identical bytes), so timing
  // goes to the run log instead and the CSV's seconds column stays zero.
  double wall_seconds = 0.0;
  std::uint64_t seed_fingerprint = 0;
};

// Schema: round,algorithm,train_loss,test_acc,uplink_bytes,cum_uplink_bytes,seconds
std::string metrics_csv_header();

std::string metrics_csv(const std::vector<RoundRecord>& records,
                        const std::string& algorithm);

void write_metrics_csv(const std::vector<RoundRecord>& records,
                       const std::string& algorithm, const std::string& path);

}  // namespace fedbat

#endif  // FEDBAT_METRICS_HPP
