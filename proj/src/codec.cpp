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

#include "fedbat/codec.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

namespace fedbat {

namespace {

// sign(0) = +1 throughout; fixed for bit-reproducibility.
inline double sign_pm1(double x) { return x >= 0.0 ? 1.0 : -1.0; }

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
  out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xFF));
  out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xFF));
}

void put_f32(std::vector<std::uint8_t>& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  put_u32(out, bits);
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = static_cast<std::uint32_t>(bytes_[pos_]) |
                      (static_cast<std::uint32_t>(bytes_[pos_ + 1]) << 8) |
                      (static_cast<std::uint32_t>(bytes_[pos_ + 2]) << 16) |
                      (static_cast<std::uint32_t>(bytes_[pos_ + 3]) << 24);
    pos_ += 4;
    return v;
  }
  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }
  std::vector<std::uint8_t> raw(std::size_t n) {
    need(n);
    std::vector<std::uint8_t> out(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                  bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return out;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw FormatError("message: truncated payload");
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

constexpr std::size_t kHeaderBytes = 4 + 1 + 1 + 4 + 4 + 4;
constexpr std::size_t kLayerHeaderBytes = 4 + 4;

}  // namespace

std::string to_string(CodecKind kind) {
  switch (kind) {
    case CodecKind::kFedAvgRaw: return "fedavg-raw";
    case CodecKind::kSignSgd: return "signsgd";
    case CodecKind::kEfSignSgd: return "ef-signsgd";
    case CodecKind::kNoisySignSgd: return "noisy-signsgd";
    case CodecKind::kStocSignSgd: return "stoc-signsgd";
    case CodecKind::kFedBat: return "fedbat";
  }
  throw ArgumentError("codec: unknown kind");
}

CodecKind codec_from_string(const std::string& name) {
  if (name == "fedavg-raw") return CodecKind::kFedAvgRaw;
  if (name == "signsgd") return CodecKind::kSignSgd;
  if (name == "ef-signsgd") return CodecKind::kEfSignSgd;
  if (name == "noisy-signsgd") return CodecKind::kNoisySignSgd;
  if (name == "stoc-signsgd") return CodecKind::kStocSignSgd;
  if (name == "fedbat") return CodecKind::kFedBat;
  throw ArgumentError("codec: unknown kind '" + name + "'");
}

CodecParams default_codec_params(CodecKind kind) {
  CodecParams p;
  switch (kind) {
    case CodecKind::kSignSgd:
      p.alpha = 0.001;
      break;
    case CodecKind::kNoisySignSgd:
      p.alpha = 0.01;
      p.sigma = 0.01;
      break;
    case CodecKind::kStocSignSgd:
      p.alpha = 0.01;
      break;
    default:
      break;
  }
  return p;
}

std::uint32_t message_round(const UplinkMessage& msg) {
  return std::visit([](const auto& m) { return m.round; }, msg);
}

std::uint32_t message_client(const UplinkMessage& msg) {
  return std::visit([](const auto& m) { return m.client_id; }, msg);
}

ErrorFeedbackState ErrorFeedbackState::zeros(
    const std::vector<Eigen::Index>& sizes) {
  ErrorFeedbackState state;
  for (Eigen::Index n : sizes) state.layers.push_back(Vec::Zero(n));
  return state;
}

std::vector<std::uint8_t> pack_signs(const Vec& signs) {
  std::vector<std::uint8_t> out((static_cast<std::size_t>(signs.size()) + 7) / 8, 0);
  for (Eigen::Index i = 0; i < signs.size(); ++i) {
    if (signs(i) == 1.0) {
      out[static_cast<std::size_t>(i) / 8] |=
          static_cast<std::uint8_t>(1u << (i % 8));
    } else if (signs(i) != -1.0) {
      throw ContractError("pack_signs: element is not exactly +-1");
    }
  }
  return out;
}

Vec unpack_signs(const std::vector<std::uint8_t>& packed, std::uint32_t count) {
  const std::size_t expected = (static_cast<std::size_t>(count) + 7) / 8;
  if (packed.size() != expected)
    throw FormatError("unpack_signs: payload length mismatch");
  if (count % 8 != 0) {
    const std::uint8_t pad_mask =
        static_cast<std::uint8_t>(0xFFu << (count % 8));
    if ((packed.back() & pad_mask) != 0)
      throw FormatError("unpack_signs: nonzero pad bits");
  }
  Vec out(count);
  for (std::uint32_t i = 0; i < count; ++i)
    out(i) = (packed[i / 8] >> (i % 8)) & 1u ? 1.0 : -1.0;
  return out;
}

BinaryLayerPayload encode_signs(std::uint32_t layer_id, const Vec& signs,
                                double alpha) {
  if (!(alpha > 0.0)) throw ContractError("encode_signs: alpha must be > 0");
  BinaryLayerPayload layer;
  layer.layer_id = layer_id;
  layer.count = static_cast<std::uint32_t>(signs.size());
  layer.alpha = static_cast<float>(alpha);
  layer.packed = pack_signs(signs);
  return layer;
}

Vec decode_signs(const BinaryLayerPayload& layer) {
  return unpack_signs(layer.packed, layer.count);
}

UplinkMessage compress(CodecKind kind, const CodecParams& params,
                       std::uint32_t round, std::uint32_t client_id,
                       const UpdateDelta& delta, ErrorFeedbackState* state,
                       SeededRng& rng) {
  const std::size_t n_layers = delta.layers.size();
  if (kind == CodecKind::kEfSignSgd) {
    if (state == nullptr || state->layers.size() != n_layers)
      throw ContractError("compress: ef-signsgd needs a shape-matched state");
  }

  if (kind == CodecKind::kFedAvgRaw) {
    RawUpdateMessage msg{round, client_id, {}};
    for (std::size_t l = 0; l < n_layers; ++l) {
      RawLayerPayload layer;
      layer.layer_id = static_cast<std::uint32_t>(l);
      layer.count = static_cast<std::uint32_t>(delta.layers[l].size());
      layer.values.resize(layer.count);
      for (std::uint32_t i = 0; i < layer.count; ++i)
        layer.values[i] = static_cast<float>(delta.layers[l](i));
      msg.layers.push_back(std::move(layer));
    }
    return msg;
  }

  BinaryUpdateMessage msg{round, client_id, {}};
  for (std::size_t l = 0; l < n_layers; ++l) {
    const Vec& m = delta.layers[l];
    Vec signs(m.size());
    double alpha = params.alpha;
    switch (kind) {
      case CodecKind::kSignSgd:
        for (Eigen::Index i = 0; i < m.size(); ++i) signs(i) = sign_pm1(m(i));
        break;
      case CodecKind::kEfSignSgd: {
        const Vec b = m + state->layers[l];
        alpha = std::max(norms(b).l1 / static_cast<double>(b.size()),
                         kAlphaPrimeFloor);
        // The residual tracks what the server will actually reconstruct, so
        // alpha is narrowed to its wire width before use.
        alpha = static_cast<double>(static_cast<float>(alpha));
        for (Eigen::Index i = 0; i < b.size(); ++i) signs(i) = sign_pm1(b(i));
        state->layers[l] = b - alpha * signs;
        break;
      }
      case CodecKind::kNoisySignSgd:
        for (Eigen::Index i = 0; i < m.size(); ++i)
          signs(i) = sign_pm1(m(i) + rng.gaussian(params.sigma));
        break;
      case CodecKind::kStocSignSgd: {
        const double a = norms(m).linf;
        for (Eigen::Index i = 0; i < m.size(); ++i)
          signs(i) = sign_pm1(m(i) + rng.uniform_range(-a, a));
        break;
      }
      case CodecKind::kFedBat: {
        if (delta.steps.size() != n_layers)
          throw ContractError("compress: fedbat delta is missing step sizes");
        alpha = effective_alpha(delta.steps[l]);
        for (Eigen::Index i = 0; i < m.size(); ++i) {
          if (m(i) != 1.0 && m(i) != -1.0)
            throw ContractError("compress: fedbat layer is not +-1 signs");
        }
        signs = m;
        break;
      }
      default:
        throw ArgumentError("compress: unsupported kind");
    }
    msg.layers.push_back(encode_signs(static_cast<std::uint32_t>(l), signs, alpha));
  }
  return msg;
}

std::vector<Vec> decode_update(const UplinkMessage& msg) {
  std::vector<Vec> out;
  if (const auto* raw = std::get_if<RawUpdateMessage>(&msg)) {
    for (const auto& layer : raw->layers) {
      Vec v(layer.count);
      for (std::uint32_t i = 0; i < layer.count; ++i)
        v(i) = static_cast<double>(layer.values[i]);
      out.push_back(std::move(v));
    }
  } else {
    const auto& bin = std::get<BinaryUpdateMessage>(msg);
    for (const auto& layer : bin.layers) {
      out.push_back(static_cast<double>(layer.alpha) * decode_signs(layer));
    }
  }
  return out;
}

std::size_t uplink_bytes(const UplinkMessage& msg) {
  std::size_t total = kHeaderBytes;
  if (const auto* raw = std::get_if<RawUpdateMessage>(&msg)) {
    for (const auto& layer : raw->layers)
      total += kLayerHeaderBytes + 4 * static_cast<std::size_t>(layer.count);
  } else {
    for (const auto& layer : std::get<BinaryUpdateMessage>(msg).layers)
      total += kLayerHeaderBytes + 4 + (static_cast<std::size_t>(layer.count) + 7) / 8;
  }
  return total;
}

std::vector<std::uint8_t> serialize_message(const UplinkMessage& msg) {
  std::vector<std::uint8_t> out;
  out.reserve(uplink_bytes(msg));
  out.insert(out.end(), kWireMagic, kWireMagic + 4);
  out.push_back(kWireVersion);
  out.push_back(std::holds_alternative<RawUpdateMessage>(msg) ? 0 : 1);
  put_u32(out, message_round(msg));
  put_u32(out, message_client(msg));
  if (const auto* raw = std::get_if<RawUpdateMessage>(&msg)) {
    put_u32(out, static_cast<std::uint32_t>(raw->layers.size()));
    for (const auto& layer : raw->layers) {
      put_u32(out, layer.layer_id);
      put_u32(out, layer.count);
      for (float v : layer.values) put_f32(out, v);
    }
  } else {
    const auto& bin = std::get<BinaryUpdateMessage>(msg);
    put_u32(out, static_cast<std::uint32_t>(bin.layers.size()));
    for (const auto& layer : bin.layers) {
      put_u32(out, layer.layer_id);
      put_u32(out, layer.count);
      put_f32(out, layer.alpha);
      out.insert(out.end(), layer.packed.begin(), layer.packed.end());
    }
  }
  return out;
}

UplinkMessage parse_message(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  const auto magic = r.raw(4);
  if (std::memcmp(magic.data(), kWireMagic, 4) != 0)
    throw FormatError("message: bad magic");
  if (r.u8() != kWireVersion) throw FormatError("message: unsupported version");
  const std::uint8_t kind = r.u8();
  if (kind > 1) throw FormatError("message: unknown message kind");
  const std::uint32_t round = r.u32();
  const std::uint32_t client = r.u32();
  const std::uint32_t n_layers = r.u32();

  UplinkMessage msg;
  if (kind == 0) {
    RawUpdateMessage raw{round, client, {}};
    for (std::uint32_t l = 0; l < n_layers; ++l) {
      RawLayerPayload layer;
      layer.layer_id = r.u32();
      layer.count = r.u32();
      layer.values.resize(layer.count);
      for (std::uint32_t i = 0; i < layer.count; ++i) layer.values[i] = r.f32();
      raw.layers.push_back(std::move(layer));
    }
    msg = std::move(raw);
  } else {
    BinaryUpdateMessage bin{round, client, {}};
    for (std::uint32_t l = 0; l < n_layers; ++l) {
      BinaryLayerPayload layer;
      layer.layer_id = r.u32();
      layer.count = r.u32();
      layer.alpha = r.f32();
      if (!(layer.alpha > 0.0f)) throw FormatError("message: alpha must be > 0");
      layer.packed = r.raw((static_cast<std::size_t>(layer.count) + 7) / 8);
      unpack_signs(layer.packed, layer.count);  // validates pad bits
      bin.layers.push_back(std::move(layer));
    }
    msg = std::move(bin);
  }
  if (!r.done()) throw FormatError("message: trailing bytes");
  return msg;
}

void write_message_file(const UplinkMessage& msg, const std::string& path) {
  const auto bytes = serialize_message(msg);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("message: cannot open '" + path + "' for write");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

UplinkMessage read_message_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("message: cannot open '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return parse_message(bytes);
}

}  // namespace fedbat
