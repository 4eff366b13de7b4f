/*
 * Copyright 2026 The cowbif Authors.
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

#include "cowbif/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <string_view>

namespace cowbif::nn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr std::string_view kMagic = "CWBFCKPT";

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw FormatError("cannot open checkpoint '" + path.string() + "' for writing");
  }
  template <typename U>
  void pod(U v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(U));
  }
  void str(std::string_view s) {
    pod(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void raw(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void finish(const std::filesystem::path& path) {
    out_.flush();
    if (!out_) throw FormatError("failed writing checkpoint '" + path.string() + "'");
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary), path_(path.string()) {
    if (!in_) throw FormatError("cannot open checkpoint '" + path_ + "'");
  }
  void raw(void* p, std::size_t n, const char* field) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw FormatError("checkpoint '" + path_ + "' truncated while reading " + field);
    }
  }
  template <typename U>
  U pod(const char* field) {
    U v{};
    raw(&v, sizeof(U), field);
    return v;
  }
  std::string str(const char* field) {
    const auto n = pod<std::uint32_t>(field);
    if (n > (1u << 24)) throw FormatError("checkpoint '" + path_ + "' has an implausible " + field + " length");
    std::string s(n, '\0');
    raw(s.data(), n, field);
    return s;
  }
  const std::string& path() const { return path_; }

 private:
  std::ifstream in_;
  std::string path_;
};

CheckpointMeta read_header(Reader& r) {
  char magic[8];
  r.raw(magic, sizeof magic, "magic");
  if (std::string_view(magic, 8) != kMagic) throw FormatError("checkpoint '" + r.path() + "': bad magic");
  const auto version = r.pod<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint '" + r.path() + "': format version " + std::to_string(version) +
                      " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  CheckpointMeta meta;
  meta.epoch = r.pod<std::uint64_t>("epoch");
  meta.seed = r.pod<std::uint64_t>("seed");
  meta.architecture = r.str("architecture");
  return meta;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> layer_tensors(Module<T>* layer) {
  std::vector<std::pair<std::string, Tensor<T>*>> out;
  for (Param<T>* p : layer->parameters()) out.emplace_back(p->name, &p->value);
  for (const Buffer<T>& b : layer->buffers()) out.emplace_back(b.name, b.tensor);
  return out;
}

}  // namespace

template <typename T>
void save_checkpoint(const std::filesystem::path& path, Module<T>& model, const CheckpointMeta& meta) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  Writer w(path);
  w.raw(kMagic.data(), kMagic.size());
  w.pod(kCheckpointVersion);
  w.pod(meta.epoch);
  w.pod(meta.seed);
  w.str(meta.architecture);
  const std::vector<Module<T>*> leaves = model.leaves();
  w.pod(static_cast<std::uint32_t>(leaves.size()));
  std::vector<float> buf;
  for (Module<T>* layer : leaves) {
    w.str(layer->kind());
    w.str(layer->name());
    const auto hyper = layer->hyperparameters();
    w.pod(static_cast<std::uint32_t>(hyper.size()));
    for (std::int64_t h : hyper) w.pod(h);
    const auto tensors = layer_tensors(layer);
    w.pod(static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
      w.str(name);
      w.pod(static_cast<std::uint32_t>(t->rank()));
      for (int d : t->shape()) w.pod(static_cast<std::int64_t>(d));
      buf.assign(t->values().begin(), t->values().end());
      w.raw(buf.data(), buf.size() * sizeof(float));
    }
  }
  w.finish(path);
}

template <typename T>
CheckpointMeta load_checkpoint(const std::filesystem::path& path, Module<T>& model) {
  Reader r(path);
  CheckpointMeta meta = read_header(r);
  const std::vector<Module<T>*> leaves = model.leaves();
  const auto count = r.pod<std::uint32_t>("layer count");
  if (count != leaves.size()) {
    throw ShapeError("checkpoint '" + r.path() + "' holds " + std::to_string(count) +
                     " layers, model has " + std::to_string(leaves.size()));
  }
  // Decode everything first so a mismatch leaves the model untouched.
  std::vector<std::vector<std::vector<float>>> staged(leaves.size());
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    Module<T>* layer = leaves[i];
    const std::string where = "layer " + std::to_string(i) + " ('" + layer->name() + "')";
    const std::string kind = r.str("layer kind");
    r.str("layer name");
    if (kind != layer->kind()) {
      throw ShapeError("checkpoint mismatch at " + where + ": stored kind '" + kind + "', model has '" +
                       std::string(layer->kind()) + "'");
    }
    const auto nh = r.pod<std::uint32_t>("hyperparameter count");
    std::vector<std::int64_t> hyper(nh);
    for (auto& h : hyper) h = r.pod<std::int64_t>("hyperparameter");
    if (hyper != layer->hyperparameters()) {
      throw ShapeError("checkpoint mismatch at " + where + ": hyperparameters differ");
    }
    const auto tensors = layer_tensors(layer);
    const auto nt = r.pod<std::uint32_t>("tensor count");
    if (nt != tensors.size()) throw ShapeError("checkpoint mismatch at " + where + ": tensor count differs");
    for (const auto& [name, t] : tensors) {
      r.str("tensor name");
      const auto rank = r.pod<std::uint32_t>("tensor rank");
      Shape shape;
      for (std::uint32_t k = 0; k < rank; ++k) shape.push_back(static_cast<int>(r.pod<std::int64_t>("tensor dim")));
      if (shape != t->shape()) {
        throw ShapeError("checkpoint mismatch at " + where + ": tensor '" + name + "' stored as " +
                         shape_to_string(shape) + ", model expects " + shape_to_string(t->shape()));
      }
      std::vector<float> values(t->size());
      r.raw(values.data(), values.size() * sizeof(float), "tensor values");
      staged[i].push_back(std::move(values));
    }
  }
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    const auto tensors = layer_tensors(leaves[i]);
    for (std::size_t k = 0; k < tensors.size(); ++k) {
      const auto& src = staged[i][k];
      std::copy(src.begin(), src.end(), tensors[k].second->values().begin());
    }
  }
  model.zero_grad();
  return meta;
}

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path) {
  Reader r(path);
  return read_header(r);
}

template void save_checkpoint(const std::filesystem::path&, Module<float>&, const CheckpointMeta&);
template void save_checkpoint(const std::filesystem::path&, Module<double>&, const CheckpointMeta&);
template CheckpointMeta load_checkpoint(const std::filesystem::path&, Module<float>&);
template CheckpointMeta load_checkpoint(const std::filesystem::path&, Module<double>&);

}  // namespace cowbif::nn
