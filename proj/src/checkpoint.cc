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

#include "duq/checkpoint.h"

#include <bit>
#include <fstream>
#include <sstream>

#include "duq/error.h"

namespace duq {
namespace {

constexpr char kMagic[8] = {'D', 'U', 'Q', 'C', 'K', 'P', 'T', '\0'};

class Writer {
 public:
  void Bytes(const void* p, std::size_t n) {
    out_.append(static_cast<const char*>(p), n);
  }
  void U32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void U64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void F64(double v) { U64(std::bit_cast<std::uint64_t>(v)); }
  void Str(const std::string& s) {
    U32(static_cast<std::uint32_t>(s.size()));
    out_ += s;
  }
  std::string Take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  void Need(std::size_t n, const std::string& what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError("checkpoint truncated while reading " + what);
    }
  }
  std::uint32_t U32(const std::string& what) {
    Need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }
  std::uint64_t U64(const std::string& what) {
    Need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 8;
    return v;
  }
  double F64(const std::string& what) { return std::bit_cast<double>(U64(what)); }
  std::string Str(const std::string& what) {
    const std::uint32_t n = U32(what);
    Need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string Raw(std::size_t n, const std::string& what) {
    Need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

struct Header {
  ModelKind kind = ModelKind::kDuq;
  CheckpointInfo info;
  std::vector<std::size_t> sizes;
  std::size_t classes = 0;
  std::size_t centroid_size = 0;
  double sigma = 0.0;
  double gamma = 0.0;
};

std::string Serialize(const Header& h, const ParameterSet& segments) {
  Writer w;
  w.Bytes(kMagic, sizeof(kMagic));
  w.U32(kCheckpointVersion);
  w.Str(std::string(ToString(h.kind)));
  w.U64(h.info.seed);
  w.Str(h.info.config_digest);
  w.U32(static_cast<std::uint32_t>(h.sizes.size()));
  for (std::size_t s : h.sizes) w.U64(s);
  w.U64(h.classes);
  w.U64(h.centroid_size);
  w.F64(h.sigma);
  w.F64(h.gamma);
  w.U32(static_cast<std::uint32_t>(segments.size()));
  std::uint64_t total = 0;
  for (const NamedTensor& seg : segments) {
    w.Str(seg.name);
    w.U32(static_cast<std::uint32_t>(seg.value.rank()));
    for (std::size_t e : seg.value.shape()) w.U64(e);
    total += seg.value.size();
  }
  w.U64(total);
  for (const NamedTensor& seg : segments) {
    for (double v : seg.value.data()) w.F64(v);
  }
  return w.Take();
}

ParameterSet CentroidSegments(const CentroidState& state) {
  ParameterSet out;
  out.push_back({"centroids.e", state.centroids});
  out.push_back({"centroids.m", state.sums});
  out.push_back({"centroids.n", Tensor::Vector(state.counts)});
  return out;
}

void WriteFile(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing checkpoint '" + path.string() + "'");
}

}  // namespace

std::string SerializeCheckpoint(const DuqModel& model, const CheckpointInfo& info) {
  Header h;
  h.kind = ModelKind::kDuq;
  h.info = info;
  h.sizes = model.architecture().extractor_sizes;
  h.classes = model.class_count();
  h.centroid_size = model.centroid_size();
  h.sigma = model.sigma();
  h.gamma = model.centroid_state().gamma;
  ParameterSet segments = model.parameters();
  for (NamedTensor& seg : CentroidSegments(model.centroid_state())) {
    segments.push_back(std::move(seg));
  }
  return Serialize(h, segments);
}

std::string SerializeCheckpoint(const SoftmaxModel& model, const CheckpointInfo& info) {
  Header h;
  h.kind = ModelKind::kSoftmax;
  h.info = info;
  h.sizes = model.extractor_sizes();
  h.classes = model.class_count();
  return Serialize(h, model.parameters());
}

LoadedCheckpoint ParseCheckpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.Raw(sizeof(kMagic), "magic") != std::string(kMagic, sizeof(kMagic))) {
    throw FormatError("not a DUQ checkpoint (bad magic)");
  }
  const std::uint32_t version = r.U32("version");
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint version " + std::to_string(version) +
                      " is not supported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  Header h;
  const std::string kind = r.Str("model kind");
  if (kind == "duq") {
    h.kind = ModelKind::kDuq;
  } else if (kind == "softmax") {
    h.kind = ModelKind::kSoftmax;
  } else {
    throw FormatError("unknown checkpoint model kind '" + kind + "'");
  }
  h.info.seed = r.U64("seed");
  h.info.config_digest = r.Str("config digest");
  const std::uint32_t layers = r.U32("layer count");
  r.Need(8ull * layers, "layer sizes");
  for (std::uint32_t i = 0; i < layers; ++i) h.sizes.push_back(r.U64("layer sizes"));
  h.classes = r.U64("class count");
  h.centroid_size = r.U64("centroid size");
  h.sigma = r.F64("sigma");
  h.gamma = r.F64("gamma");

  struct Entry {
    std::string name;
    Shape shape;
  };
  const std::uint32_t count = r.U32("segment count");
  std::vector<Entry> manifest;
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry e;
    e.name = r.Str("segment name");
    const std::uint32_t rank = r.U32("rank of segment '" + e.name + "'");
    r.Need(8ull * rank, "extents of segment '" + e.name + "'");
    for (std::uint32_t k = 0; k < rank; ++k) {
      e.shape.push_back(r.U64("extents of segment '" + e.name + "'"));
    }
    manifest.push_back(std::move(e));
  }
  const std::uint64_t payload = r.U64("payload length");
  std::uint64_t offset = 0;
  for (const Entry& e : manifest) {
    const std::uint64_t n = ShapeSize(e.shape);
    if (n > payload - offset) {
      throw FormatError("segment '" + e.name + "' " + ShapeToString(e.shape) +
                        " extends past the payload of " + std::to_string(payload) +
                        " values");
    }
    offset += n;
  }
  if (offset != payload) {
    throw FormatError("manifest covers " + std::to_string(offset) +
                      " values but the payload holds " + std::to_string(payload));
  }
  if (r.remaining() / 8 < payload) {
    throw FormatError("checkpoint truncated while reading payload");
  }
  ParameterSet segments;
  for (const Entry& e : manifest) {
    std::vector<double> values(ShapeSize(e.shape));
    for (double& v : values) v = r.F64("payload");
    segments.push_back({e.name, Tensor(e.shape, std::move(values))});
  }
  if (r.remaining() != 0) {
    throw FormatError("checkpoint has " + std::to_string(r.remaining()) +
                      " trailing bytes");
  }

  LoadedCheckpoint out;
  out.kind = h.kind;
  out.info = h.info;
  try {
    if (h.kind == ModelKind::kSoftmax) {
      out.model = SoftmaxModel::FromParts(h.sizes, h.classes, std::move(segments));
      return out;
    }
    if (segments.size() < 3) throw FormatError("DUQ checkpoint lacks centroid segments");
    const auto take = [&segments](const char* name) {
      NamedTensor seg = std::move(segments.back());
      segments.pop_back();
      if (seg.name != name) {
        throw FormatError("expected segment '" + std::string(name) + "', found '" +
                          seg.name + "'");
      }
      return std::move(seg.value);
    };
    CentroidState state;
    const Tensor counts = take("centroids.n");
    state.sums = take("centroids.m");
    state.centroids = take("centroids.e");
    state.counts.assign(counts.data().begin(), counts.data().end());
    state.gamma = h.gamma;
    DuqArchitecture arch{h.sizes, h.centroid_size, h.classes};
    out.model = DuqModel::FromParts(std::move(arch), h.sigma, std::move(segments),
                                    std::move(state));
  } catch (const ShapeError& e) {
    throw FormatError(std::string("checkpoint manifest does not match its model: ") +
                      e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint header is invalid: ") + e.what());
  }
  return out;
}

void SaveCheckpoint(const std::filesystem::path& path, const DuqModel& model,
                    const CheckpointInfo& info) {
  WriteFile(path, SerializeCheckpoint(model, info));
}

void SaveCheckpoint(const std::filesystem::path& path, const SoftmaxModel& model,
                    const CheckpointInfo& info) {
  WriteFile(path, SerializeCheckpoint(model, info));
}

LoadedCheckpoint LoadCheckpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("checkpoint '" + path.string() + "' not found");
  std::ostringstream bytes;
  bytes << in.rdbuf();
  try {
    return ParseCheckpoint(bytes.str());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

DuqModel LoadDuqCheckpoint(const std::filesystem::path& path, CheckpointInfo* info) {
  LoadedCheckpoint c = LoadCheckpoint(path);
  if (c.kind != ModelKind::kDuq) {
    throw FormatError(path.string() + ": expected a duq checkpoint, found " +
                      std::string(ToString(c.kind)));
  }
  if (info != nullptr) *info = c.info;
  return std::get<DuqModel>(std::move(c.model));
}

SoftmaxModel LoadSoftmaxCheckpoint(const std::filesystem::path& path,
                                   CheckpointInfo* info) {
  LoadedCheckpoint c = LoadCheckpoint(path);
  if (c.kind != ModelKind::kSoftmax) {
    throw FormatError(path.string() + ": expected a softmax checkpoint, found " +
                      std::string(ToString(c.kind)));
  }
  if (info != nullptr) *info = c.info;
  return std::get<SoftmaxModel>(std::move(c.model));
}

}  // namespace duq
