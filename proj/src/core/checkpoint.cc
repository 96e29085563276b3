// Copyright 2026 The streamkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "core/checkpoint.h"

#include <openssl/evp.h>

#include <bit>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#include "core/error.h"

namespace streamkd {

namespace le {

void PutU32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>(v >> (8 * i)));
}

void PutU64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>(v >> (8 * i)));
}

void PutF64(std::string& out, double v) { PutU64(out, std::bit_cast<uint64_t>(v)); }

void Reader::Need(size_t n) {
  if (bytes_.size() - pos_ < n) {
    Fail(ErrorCode::kFormat, what_ + ": unexpected end of data at byte " +
                                 std::to_string(pos_));
  }
}

uint8_t Reader::U8() {
  Need(1);
  return static_cast<uint8_t>(bytes_[pos_++]);
}

uint32_t Reader::U32() {
  Need(4);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<uint32_t>(static_cast<uint8_t>(bytes_[pos_ + i])) << (8 * i);
  pos_ += 4;
  return v;
}

uint64_t Reader::U64() {
  Need(8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<uint64_t>(static_cast<uint8_t>(bytes_[pos_ + i])) << (8 * i);
  pos_ += 8;
  return v;
}

double Reader::F64() { return std::bit_cast<double>(U64()); }

std::string Reader::Bytes(size_t n) {
  Need(n);
  std::string s = bytes_.substr(pos_, n);
  pos_ += n;
  return s;
}

}  // namespace le

namespace {

constexpr char kMagic[] = "SKDCKPT1";
constexpr size_t kMagicLen = 8;

void PutArray(std::string& out, const std::string& name, const Array& a) {
  le::PutU32(out, static_cast<uint32_t>(name.size()));
  out += name;
  le::PutU32(out, static_cast<uint32_t>(a.rank()));
  for (size_t e : a.shape()) le::PutU64(out, e);
  for (double v : a.values()) le::PutF64(out, v);
}

std::pair<std::string, Array> GetArray(le::Reader& r) {
  const uint32_t name_len = r.U32();
  if (name_len > 4096) Fail(ErrorCode::kFormat, "checkpoint: bad array name length");
  std::string name = r.Bytes(name_len);
  const uint32_t rank = r.U32();
  if (rank > 8) Fail(ErrorCode::kFormat, "checkpoint: bad rank for '" + name + "'");
  std::vector<size_t> shape(rank);
  uint64_t count = 1;
  for (auto& e : shape) {
    e = r.U64();
    count *= e;
  }
  if (count * 8 > r.remaining()) {
    Fail(ErrorCode::kFormat, "checkpoint: array '" + name + "' is truncated");
  }
  std::vector<double> data(count);
  for (auto& v : data) v = r.F64();
  return {std::move(name), Array(std::move(shape), std::move(data))};
}

}  // namespace

std::string SerializeCheckpoint(const ModelParams& params) {
  std::ostringstream header;
  header << params.config.Serialize();
  header << "mask=" << FormatMaskSpec(params.mask) << "\n";
  header << "residual=pre-norm\n";
  header << "bn_initialized=" << (params.bn.initialized ? 1 : 0) << "\n";
  const std::string h = header.str();

  std::string out(kMagic, kMagicLen);
  le::PutU32(out, kCheckpointVersion);
  le::PutU32(out, static_cast<uint32_t>(h.size()));
  out += h;
  const bool has_bn = !params.bn.running_mean.empty();
  le::PutU32(out, static_cast<uint32_t>(params.weights.size() + (has_bn ? 2 : 0)));
  for (const auto& [name, a] : params.weights) PutArray(out, name, a);
  if (has_bn) {
    PutArray(out, "buffer.bn.running_mean", params.bn.running_mean);
    PutArray(out, "buffer.bn.running_var", params.bn.running_var);
  }
  le::PutU64(out, out.size() + 8);
  return out;
}

ModelParams DeserializeCheckpoint(const std::string& bytes,
                                  const EncoderConfig* expected) {
  if (bytes.size() < kMagicLen + 16 ||
      bytes.compare(0, kMagicLen, kMagic, kMagicLen) != 0) {
    Fail(ErrorCode::kFormat, "checkpoint: bad magic");
  }
  le::Reader tail(bytes, "checkpoint");
  tail.Seek(bytes.size() - 8);
  if (tail.U64() != bytes.size()) {
    Fail(ErrorCode::kFormat,
         "checkpoint: integrity check failed (length field does not match "
         "file size)");
  }
  const std::string body = bytes.substr(0, bytes.size() - 8);
  le::Reader r(body, "checkpoint");
  r.Seek(kMagicLen);
  const uint32_t version = r.U32();
  if (version != kCheckpointVersion) {
    Fail(ErrorCode::kFormat, "checkpoint: unsupported format version " +
                                 std::to_string(version));
  }
  const std::string header = r.Bytes(r.U32());

  ModelParams p;
  std::string config_text;
  bool bn_initialized = false;
  std::istringstream hs(header);
  std::string line;
  while (std::getline(hs, line)) {
    if (line.rfind("mask=", 0) == 0) {
      p.mask = ParseMaskSpec(line.substr(5));
    } else if (line.rfind("residual=", 0) == 0) {
      if (line != "residual=pre-norm") {
        Fail(ErrorCode::kFormat, "checkpoint: unsupported " + line);
      }
    } else if (line.rfind("bn_initialized=", 0) == 0) {
      bn_initialized = line == "bn_initialized=1";
    } else {
      config_text += line + "\n";
    }
  }
  p.config = EncoderConfig::Parse(config_text);
  if (expected && !(*expected == p.config)) {
    Fail(ErrorCode::kConfigMismatch,
         "checkpoint: stored encoder config does not match the expected "
         "config");
  }

  const uint32_t count = r.U32();
  p.bn = BatchNormState::Zero(p.config.model_dim);
  for (uint32_t i = 0; i < count; ++i) {
    auto [name, a] = GetArray(r);
    if (name == "buffer.bn.running_mean") {
      p.bn.running_mean = std::move(a);
    } else if (name == "buffer.bn.running_var") {
      p.bn.running_var = std::move(a);
    } else {
      p.weights.emplace(std::move(name), std::move(a));
    }
  }
  p.bn.initialized = bn_initialized;
  if (r.remaining() != 0) {
    Fail(ErrorCode::kFormat, "checkpoint: trailing bytes after arrays");
  }
  // Shapes must agree with a fresh model of the stored config.
  const ModelParams ref = InitParams(p.config, 0);
  if (ref.weights.size() != p.weights.size()) {
    Fail(ErrorCode::kFormat, "checkpoint: parameter set does not match config");
  }
  for (const auto& [name, a] : ref.weights) {
    auto it = p.weights.find(name);
    if (it == p.weights.end() || !it->second.SameShape(a)) {
      Fail(ErrorCode::kFormat, "checkpoint: parameter '" + name +
                                   "' is missing or has the wrong shape");
    }
  }
  return p;
}

std::string ReadFileBytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorCode::kIo, "cannot open '" + path + "' for reading");
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void WriteFileBytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) Fail(ErrorCode::kIo, "cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) Fail(ErrorCode::kIo, "write to '" + path + "' failed");
}

void SaveCheckpoint(const ModelParams& params, const std::string& path) {
  WriteFileBytes(path, SerializeCheckpoint(params));
}

ModelParams LoadCheckpoint(const std::string& path,
                           const EncoderConfig* expected) {
  return DeserializeCheckpoint(ReadFileBytes(path), expected);
}

std::string Sha256Hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    Fail(ErrorCode::kInternal, "sha256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

std::string CheckpointDigest(const ModelParams& params) {
  return Sha256Hex(SerializeCheckpoint(params));
}

}  // namespace streamkd
