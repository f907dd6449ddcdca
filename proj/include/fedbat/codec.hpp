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

#ifndef FEDBAT_CODEC_HPP
#define FEDBAT_CODEC_HPP

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "fedbat/binarizer.hpp"
#include "fedbat/rng.hpp"
#include "fedbat/tensor.hpp"

namespace fedbat {

// Uplink message wire format (all integers little-endian):
//
//   magic "FBAT" | version u8 = 1 | kind u8 (0 raw, 1 binary)
//   round u32 | client u32 | n_layers u32
//   per layer: layer_id u32 | count u32 | payload
//     binary payload: alpha f32 | ceil(count/8) sign bytes
//     raw payload:    count x f32
//
// Sign bits are packed LSB-first within each byte, bit 1 = +1, bit 0 = -1,
// and trailing pad bits are zero. Training runs in 64-bit; the wire narrows
// to 32-bit here and nowhere else.
inline constexpr char kWireMagic[4] = {'F', 'B', 'A', 'T'};
inline constexpr std::uint8_t kWireVersion = 1;

enum class CodecKind {
  kFedAvgRaw,
  kSignSgd,
  kEfSignSgd,
  kNoisySignSgd,
  kStocSignSgd,
  kFedBat,
};

std::string to_string(CodecKind kind);
CodecKind codec_from_string(const std::string& name);

// Scalar hyperparameters for the sign-based baselines. The step size is one
// global scalar for signsgd/noisy/stoc; ef-signsgd and fedbat derive per-layer
// step sizes from their own formulas.
struct CodecParams {
  double alpha = 0.001;
  double sigma = 0.01;  // noisy-signsgd only
};

CodecParams default_codec_params(CodecKind kind);

// Per-layer full-precision update plus its step-size parameters (the step
// sizes are meaningful only for fedbat, whose layers hold bare +-1 signs).
struct UpdateDelta {
  std::vector<Vec> layers;
  std::vector<StepSizeParam> steps;
};

struct BinaryLayerPayload {
  std::uint32_t layer_id = 0;
  std::uint32_t count = 0;
  float alpha = 0.0f;
  std::vector<std::uint8_t> packed;
};

struct BinaryUpdateMessage {
  std::uint32_t round = 0;
  std::uint32_t client_id = 0;
  std::vector<BinaryLayerPayload> layers;
};

struct RawLayerPayload {
  std::uint32_t layer_id = 0;
  std::uint32_t count = 0;
  std::vector<float> values;
};

struct RawUpdateMessage {
  std::uint32_t round = 0;
  std::uint32_t client_id = 0;
  std::vector<RawLayerPayload> layers;
};

using UplinkMessage = std::variant<RawUpdateMessage, BinaryUpdateMessage>;

std::uint32_t message_round(const UplinkMessage& msg);
std::uint32_t message_client(const UplinkMessage& msg);

// Per-client binarization residual, shape-matched to the model layers,
// zero-initialized. Frozen while the client sits out a round.
struct ErrorFeedbackState {
  std::vector<Vec> layers;
  static ErrorFeedbackState zeros(const std::vector<Eigen::Index>& sizes);
};

// Pack a +-1 vector into bytes (LSB-first, +1 -> 1). Rejects anything that
// is not exactly +-1.
std::vector<std::uint8_t> pack_signs(const Vec& signs);

// Exact inverse of pack_signs; rejects wrong payload length and nonzero pad
// bits.
Vec unpack_signs(const std::vector<std::uint8_t>& packed, std::uint32_t count);

BinaryLayerPayload encode_signs(std::uint32_t layer_id, const Vec& signs,
                                double alpha);
Vec decode_signs(const BinaryLayerPayload& layer);

// Apply one uplink compressor. ef-signsgd requires `state` and replaces its
// residual; every other kind ignores it.
UplinkMessage compress(CodecKind kind, const CodecParams& params,
                       std::uint32_t round, std::uint32_t client_id,
                       const UpdateDelta& delta, ErrorFeedbackState* state,
                       SeededRng& rng);

// Per-layer update the server applies: alpha * signs for binary messages,
// widened raw values otherwise.
std::vector<Vec> decode_update(const UplinkMessage& msg);

// Exact serialized size in bytes.
std::size_t uplink_bytes(const UplinkMessage& msg);

std::vector<std::uint8_t> serialize_message(const UplinkMessage& msg);
UplinkMessage parse_message(const std::vector<std::uint8_t>& bytes);

void write_message_file(const UplinkMessage& msg, const std::string& path);
UplinkMessage read_message_file(const std::string& path);

}  // namespace fedbat

#endif  // FEDBAT_CODEC_HPP
