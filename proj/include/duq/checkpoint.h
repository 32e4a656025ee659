// Copyright 2026 The DUQ Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Binary model checkpoints. All integers and reals are little endian.
//
//   magic        8 bytes  "DUQCKPT\0"
//   version      u32      kCheckpointVersion
//   kind         str      "duq" | "softmax"
//   seed         u64
//   digest       str      config digest
//   layers       u32, then u64 per extractor size (m, hidden..., d)
//   classes      u64
//   n            u64      centroid size (0 for softmax)
//   sigma        f64      (0 for softmax)
//   gamma        f64      (0 for softmax)
//   segments     u32, then per segment: str name, u32 rank, u64 per extent
//   payload      u64 value count, then that many f64
//
// str is a u32 byte length followed by the bytes. Segments appear in
// parameter order; DUQ checkpoints end with "centroids.e", "centroids.m"
// and "centroids.n". The payload holds the segments back to back.

#ifndef DUQ_CHECKPOINT_H_
#define DUQ_CHECKPOINT_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>

#include "duq/baselines.h"
#include "duq/config.h"
#include "duq/model.h"

namespace duq {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointInfo {
  std::uint64_t seed = 0;
  std::string config_digest;
};

struct LoadedCheckpoint {
  ModelKind kind = ModelKind::kDuq;
  CheckpointInfo info;
  std::variant<DuqModel, SoftmaxModel> model;
};

std::string SerializeCheckpoint(const DuqModel& model, const CheckpointInfo& info);
std::string SerializeCheckpoint(const SoftmaxModel& model, const CheckpointInfo& info);
// Throws FormatError on a bad magic, version, manifest or truncation.
LoadedCheckpoint ParseCheckpoint(const std::string& bytes);

void SaveCheckpoint(const std::filesystem::path& path, const DuqModel& model,
                    const CheckpointInfo& info);
void SaveCheckpoint(const std::filesystem::path& path, const SoftmaxModel& model,
                    const CheckpointInfo& info);
LoadedCheckpoint LoadCheckpoint(const std::filesystem::path& path);

// Typed loads; a checkpoint of the other kind is a FormatError.
DuqModel LoadDuqCheckpoint(const std::filesystem::path& path,
                           CheckpointInfo* info = nullptr);
SoftmaxModel LoadSoftmaxCheckpoint(const std::filesystem::path& path,
                                   CheckpointInfo* info = nullptr);

}  // namespace duq

#endif  // DUQ_CHECKPOINT_H_
