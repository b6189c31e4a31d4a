#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dynedit/nn.hpp"

namespace dynedit {

using json = nlohmann::json;

// Checkpoint file layout:
//   8-byte magic | u32 version | u64 manifest length | manifest JSON | raw blob
// The manifest lists every tensor's name, shape, dtype and byte offset into
// the blob, plus a free-form "meta" object (config echo, vocab, RNG states).
inline constexpr char kCkptMagic[8] = {'D', 'Y', 'N', 'E', 'D', 'I', 'T', '1'};
inline constexpr std::uint32_t kCkptVersion = 1;

class CheckpointWriter {
 public:
  void set_meta(json meta) { meta_ = std::move(meta); }

  void add_f32(const std::string& name, const Shape& shape, const std::vector<float>& v) {
    add_raw(name, shape, "f32", v.data(), v.size() * sizeof(float));
  }
  void add_f64(const std::string& name, const Shape& shape, const std::vector<double>& v) {
    add_raw(name, shape, "f64", v.data(), v.size() * sizeof(double));
  }
  void add_i64(const std::string& name, const std::vector<std::int64_t>& v) {
    add_raw(name, {static_cast<std::int64_t>(v.size())}, "i64", v.data(),
            v.size() * sizeof(std::int64_t));
  }

  template <class S>
  void add_params(const ParamList<S>& params, const std::string& prefix = "") {
    for (const auto& [name, t] : params) {
      if constexpr (std::is_same_v<S, float>)
        add_f32(prefix + name, t.shape(), t.data());
      else
        add_f64(prefix + name, t.shape(), t.data());
    }
  }

  void write(const std::string& path) const {
    json manifest;
    manifest["tensors"] = entries_;
    manifest["meta"] = meta_;
    std::string mstr = manifest.dump();
    std::ofstream f(path, std::ios::binary);
    DYN_CHECK(f.good(), "cannot open " << path << " for writing");
    f.write(kCkptMagic, 8);
    std::uint32_t ver = kCkptVersion;
    f.write(reinterpret_cast<const char*>(&ver), sizeof(ver));
    std::uint64_t mlen = mstr.size();
    f.write(reinterpret_cast<const char*>(&mlen), sizeof(mlen));
    f.write(mstr.data(), static_cast<std::streamsize>(mstr.size()));
    f.write(reinterpret_cast<const char*>(blob_.data()), static_cast<std::streamsize>(blob_.size()));
    DYN_CHECK(f.good(), "write to " << path << " failed");
  }

 private:
  void add_raw(const std::string& name, const Shape& shape, const char* dtype, const void* data,
               size_t bytes) {
    json e;
    e["name"] = name;
    e["shape"] = shape;
    e["dtype"] = dtype;
    e["offset"] = blob_.size();
    e["bytes"] = bytes;
    entries_.push_back(std::move(e));
    size_t at = blob_.size();
    blob_.resize(at + bytes);
    std::memcpy(blob_.data() + at, data, bytes);
  }

  json meta_ = json::object();
  std::vector<json> entries_;
  std::vector<std::uint8_t> blob_;
};

class CheckpointReader {
 public:
  explicit CheckpointReader(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    DYN_CHECK(f.good(), "cannot open checkpoint " << path);
    char magic[8];
    f.read(magic, 8);
    DYN_CHECK(f.good() && std::memcmp(magic, kCkptMagic, 8) == 0,
              path << " is not a checkpoint file");
    std::uint32_t ver = 0;
    f.read(reinterpret_cast<char*>(&ver), sizeof(ver));
    DYN_CHECK(ver == kCkptVersion, "unsupported checkpoint version " << ver);
    std::uint64_t mlen = 0;
    f.read(reinterpret_cast<char*>(&mlen), sizeof(mlen));
    std::string mstr(mlen, '\0');
    f.read(mstr.data(), static_cast<std::streamsize>(mlen));
    DYN_CHECK(f.good(), "truncated checkpoint manifest in " << path);
    json manifest = json::parse(mstr);
    meta_ = manifest.value("meta", json::object());
    blob_.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
    for (const auto& e : manifest["tensors"]) {
      Entry ent;
      ent.shape = e["shape"].get<Shape>();
      ent.dtype = e["dtype"].get<std::string>();
      ent.offset = e["offset"].get<std::uint64_t>();
      ent.bytes = e["bytes"].get<std::uint64_t>();
      DYN_CHECK(ent.offset + ent.bytes <= blob_.size(), "truncated checkpoint blob in " << path);
      entries_[e["name"].get<std::string>()] = std::move(ent);
    }
  }

  const json& meta() const { return meta_; }
  bool has(const std::string& name) const { return entries_.count(name) > 0; }
  std::vector<std::string> names() const {
    std::vector<std::string> r;
    for (const auto& [k, v] : entries_) r.push_back(k);
    return r;
  }
  Shape shape(const std::string& name) const { return entry(name).shape; }

  std::vector<float> f32(const std::string& name) const {
    const Entry& e = entry(name);
    DYN_CHECK(e.dtype == "f32", name << " has dtype " << e.dtype << ", expected f32");
    std::vector<float> v(e.bytes / sizeof(float));
    std::memcpy(v.data(), blob_.data() + e.offset, e.bytes);
    return v;
  }
  std::vector<double> f64(const std::string& name) const {
    const Entry& e = entry(name);
    DYN_CHECK(e.dtype == "f64", name << " has dtype " << e.dtype << ", expected f64");
    std::vector<double> v(e.bytes / sizeof(double));
    std::memcpy(v.data(), blob_.data() + e.offset, e.bytes);
    return v;
  }
  std::vector<std::int64_t> i64(const std::string& name) const {
    const Entry& e = entry(name);
    DYN_CHECK(e.dtype == "i64", name << " has dtype " << e.dtype << ", expected i64");
    std::vector<std::int64_t> v(e.bytes / sizeof(std::int64_t));
    std::memcpy(v.data(), blob_.data() + e.offset, e.bytes);
    return v;
  }

  // Copy stored values into live parameters, matching by name and shape.
  // Every parameter must be present; extra stored tensors are ignored.
  template <class S>
  void load_params(ParamList<S>& params, const std::string& prefix = "") const {
    for (auto& [name, t] : params) {
      std::string full = prefix + name;
      DYN_CHECK(has(full), "checkpoint is missing tensor " << full);
      const Entry& e = entry(full);
      DYN_CHECK(e.shape == t.shape(), "shape mismatch for " << full << ": stored "
                                                            << shape_str(e.shape) << " vs live "
                                                            << shape_str(t.shape()));
      if constexpr (std::is_same_v<S, float>) {
        auto v = f32(full);
        std::copy(v.begin(), v.end(), t.mutable_data().begin());
      } else {
        auto v = f64(full);
        std::copy(v.begin(), v.end(), t.mutable_data().begin());
      }
    }
  }

 private:
  struct Entry {
    Shape shape;
    std::string dtype;
    std::uint64_t offset = 0, bytes = 0;
  };
  const Entry& entry(const std::string& name) const {
    auto it = entries_.find(name);
    DYN_CHECK(it != entries_.end(), "checkpoint has no tensor named " << name);
    return it->second;
  }

  json meta_;
  std::map<std::string, Entry> entries_;
  std::vector<std::uint8_t> blob_;
};

}  // namespace dynedit
