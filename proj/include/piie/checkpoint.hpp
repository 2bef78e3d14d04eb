#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "piie/errors.hpp"
#include "piie/model.hpp"
#include "piie/vocab.hpp"

// Binary checkpoint layout, all integers little-endian:
//   "PIIE" | u32 version | u64 metadata length | metadata (canonical JSON)
//   then per tensor: u32 name length | name | u32 rank | u64 dims[rank] |
//   f32 values[numel]

namespace piie {

inline constexpr std::uint32_t checkpoint_version = 1;
inline constexpr std::array<char, 4> checkpoint_magic = {'P', 'I', 'I', 'E'};

struct CheckpointTensor {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::vector<float> values;

  friend bool operator==(const CheckpointTensor&, const CheckpointTensor&) = default;
};

struct Checkpoint {
  std::uint32_t version = checkpoint_version;
  // Holds "config", "vocab", "provenance" and "tensor_count".
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<CheckpointTensor> tensors;

  const CheckpointTensor* find(std::string_view name) const {
    for (const auto& t : tensors)
      if (t.name == name) return &t;
    return nullptr;
  }

  ModelConfig config() const { return ModelConfig::from_json(metadata.at("config")); }
  Vocab vocab() const { return Vocab::from_json(metadata.at("vocab")); }
  nlohmann::json provenance() const { return metadata.value("provenance", nlohmann::json::object()); }
};

namespace detail {

template <class T>
void put_le(std::ostream& out, T v) {
  static_assert(std::is_integral_v<T>);
  std::array<char, sizeof(T)> b{};
  for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff);
  out.write(b.data(), b.size());
}

template <class T>
T get_le(std::istream& in, const std::string& what) {
  std::array<unsigned char, sizeof(T)> b{};
  in.read(reinterpret_cast<char*>(b.data()), b.size());
  if (in.gcount() != static_cast<std::streamsize>(b.size())) throw FormatError("checkpoint truncated in " + what);
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return static_cast<T>(v);
}

inline std::string get_bytes(std::istream& in, std::uint64_t n, const std::string& what) {
  // Grow in chunks so a corrupt length cannot force a huge allocation.
  std::string s;
  constexpr std::uint64_t chunk = 1 << 20;
  while (s.size() < n) {
    const auto want = static_cast<std::size_t>(std::min<std::uint64_t>(chunk, n - s.size()));
    const std::size_t old = s.size();
    s.resize(old + want);
    in.read(s.data() + old, static_cast<std::streamsize>(want));
    if (in.gcount() != static_cast<std::streamsize>(want)) throw FormatError("checkpoint truncated in " + what);
  }
  return s;
}

}  // namespace detail

inline void write_checkpoint(const Checkpoint& ckpt, std::ostream& out) {
  nlohmann::json meta = ckpt.metadata;
  meta["tensor_count"] = ckpt.tensors.size();
  const std::string text = meta.dump();
  out.write(checkpoint_magic.data(), checkpoint_magic.size());
  detail::put_le<std::uint32_t>(out, ckpt.version);
  detail::put_le<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& t : ckpt.tensors) {
    std::uint64_t numel = 1;
    for (auto d : t.dims) numel *= d;
    if (numel != t.values.size()) throw ContractError("checkpoint tensor '" + t.name + "' has inconsistent size");
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) detail::put_le<std::uint64_t>(out, d);
    for (float v : t.values) detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  if (!out) throw FormatError("failed writing checkpoint");
}

inline std::string serialize_checkpoint(const Checkpoint& ckpt) {
  std::ostringstream out(std::ios::binary);
  write_checkpoint(ckpt, out);
  return out.str();
}

inline Checkpoint read_checkpoint(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != 4 || magic != checkpoint_magic) throw FormatError("not a checkpoint (bad magic)");
  Checkpoint ckpt;
  ckpt.version = detail::get_le<std::uint32_t>(in, "header");
  if (ckpt.version != checkpoint_version)
    throw UnsupportedVersionError("checkpoint format version " + std::to_string(ckpt.version) +
                                  " is not supported (expected " + std::to_string(checkpoint_version) + ")");
  const auto meta_len = detail::get_le<std::uint64_t>(in, "header");
  const std::string text = detail::get_bytes(in, meta_len, "metadata");
  try {
    ckpt.metadata = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
  }
  if (!ckpt.metadata.is_object() || !ckpt.metadata.contains("tensor_count"))
    throw FormatError("checkpoint metadata lacks tensor_count");
  const auto count = ckpt.metadata["tensor_count"].get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    CheckpointTensor t;
    const std::string where = "tensor " + std::to_string(i);
    const auto name_len = detail::get_le<std::uint32_t>(in, where);
    t.name = detail::get_bytes(in, name_len, where);
    const auto rank = detail::get_le<std::uint32_t>(in, t.name);
    if (rank > Shape::max_rank) throw FormatError("tensor '" + t.name + "' has unsupported rank " + std::to_string(rank));
    std::uint64_t numel = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      t.dims.push_back(detail::get_le<std::uint64_t>(in, t.name));
      numel *= t.dims.back();
    }
    const std::string raw = detail::get_bytes(in, numel * 4, t.name);
    t.values.resize(static_cast<std::size_t>(numel));
    for (std::size_t k = 0; k < t.values.size(); ++k) {
      std::uint32_t bits = 0;
      for (std::size_t b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(raw[4 * k + b])) << (8 * b);
      t.values[k] = std::bit_cast<float>(bits);
    }
    ckpt.tensors.push_back(std::move(t));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after checkpoint tensors");
  ckpt.metadata.erase("tensor_count");
  return ckpt;
}

inline void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write checkpoint '" + path.string() + "'");
    write_checkpoint(ckpt, out);
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint '" + path.string() + "'");
  return read_checkpoint(in);
}

inline Checkpoint make_checkpoint(const Model& model, nlohmann::json provenance = nlohmann::json::object()) {
  Checkpoint ckpt;
  ckpt.metadata["config"] = model.config().to_json();
  ckpt.metadata["vocab"] = model.vocab().to_json();
  if (const auto* plan = model.transfer_plan()) provenance["transfer_plan"] = plan->to_json();
  ckpt.metadata["provenance"] = std::move(provenance);
  for (const auto& p : model.params()) {
    CheckpointTensor t;
    t.name = p.name;
    for (auto d : p.value.shape().dims()) t.dims.push_back(d);
    t.values.reserve(p.value.size());
    for (double v : p.value.data().values()) t.values.push_back(static_cast<float>(v));
    ckpt.tensors.push_back(std::move(t));
  }
  return ckpt;
}

inline Tensor to_tensor(const CheckpointTensor& t) {
  std::vector<std::size_t> dims(t.dims.begin(), t.dims.end());
  Tensor out{Shape(std::span<const std::size_t>(dims))};
  for (std::size_t i = 0; i < t.values.size(); ++i) out[i] = static_cast<double>(t.values[i]);
  return out;
}

inline bool same_dims(const CheckpointTensor& t, const Shape& s) {
  if (t.dims.size() != s.rank()) return false;
  for (std::size_t i = 0; i < t.dims.size(); ++i)
    if (t.dims[i] != s[i]) return false;
  return true;
}

inline Model model_from_checkpoint(const Checkpoint& ckpt) {
  Model model(ckpt.config(), ckpt.vocab());
  std::vector<std::string> problems;
  for (auto& p : model.params()) {
    const auto* t = ckpt.find(p.name);
    if (!t)
      problems.push_back(p.name + " (missing)");
    else if (!same_dims(*t, p.value.shape()))
      problems.push_back(p.name + " (shape)");
    else
      p.value.mutable_data() = to_tensor(*t);
  }
  if (ckpt.tensors.size() != model.params().size()) problems.push_back("tensor count differs from the configuration");
  if (!problems.empty()) {
    std::string msg = "checkpoint does not match its configuration:";
    for (const auto& s : problems) msg += " " + s;
    throw CompatibilityError(msg);
  }
  return model;
}

}  // namespace piie
