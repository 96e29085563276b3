// Copyright 2026 The streamkd Authors
// SPDX-License-Identifier: Apache-2.0

// Binary checkpoint format (little-endian):
//   magic "SKDCKPT1" | u32 version | u32 header length | header text
//   | u32 array count | per array: u32 name length, name, u32 rank,
//     u64 extents..., f64 values... | u64 total file length
// The header holds the encoder config, the fine-tuning mask spec, the
// residual arrangement and the batch-norm running statistics flag.

#ifndef STREAMKD_CORE_CHECKPOINT_H_
#define STREAMKD_CORE_CHECKPOINT_H_

#include <cstdint>
#include <string>
#include <vector>

#include "core/encoder.h"

namespace streamkd {

inline constexpr uint32_t kCheckpointVersion = 1;

std::string SerializeCheckpoint(const ModelParams& params);
// Throws kFormat on corruption, kConfigMismatch when `expected` is given and
// differs from the stored config.
ModelParams DeserializeCheckpoint(const std::string& bytes,
                                  const EncoderConfig* expected = nullptr);

void SaveCheckpoint(const ModelParams& params, const std::string& path);
ModelParams LoadCheckpoint(const std::string& path,
                           const EncoderConfig* expected = nullptr);

// Hex SHA-256 of the serialized checkpoint.
std::string CheckpointDigest(const ModelParams& params);
std::string Sha256Hex(const std::string& bytes);

// Little-endian primitives shared by the binary containers.
namespace le {
void PutU32(std::string& out, uint32_t v);
void PutU64(std::string& out, uint64_t v);
void PutF64(std::string& out, double v);

class Reader {
 public:
  Reader(const std::string& bytes, std::string what)
      : bytes_(bytes), what_(std::move(what)) {}
  uint32_t U32();
  uint64_t U64();
  double F64();
  std::string Bytes(size_t n);
  uint8_t U8();
  size_t pos() const { return pos_; }
  void Seek(size_t pos) { pos_ = pos; }
  size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void Need(size_t n);
  const std::string& bytes_;
  std::string what_;
  size_t pos_ = 0;
};
}  // namespace le

std::string ReadFileBytes(const std::string& path);
void WriteFileBytes(const std::string& path, const std::string& bytes);

}  // namespace streamkd

#endif  // STREAMKD_CORE_CHECKPOINT_H_
