#include "director/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace director {

namespace {

constexpr char kMagic[8] = {'D', 'I', 'R', 'C', 'K', 'P', 'T', '\n'};
constexpr uint32_t kVersion = 1;

// Fields are written little-endian; this implementation assumes an LE host.
template <class T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

void write_tensor(std::ostream& os, const Tensor& t) {
  write_pod<uint8_t>(os, static_cast<uint8_t>(t.ndim()));
  for (int i = 0; i < t.ndim(); ++i) write_pod<int32_t>(os, t.dim(i));
  write_pod<uint64_t>(os, static_cast<uint64_t>(t.numel()));
  os.write(reinterpret_cast<const char*>(t.data()), sizeof(float) * t.numel());
}

Tensor read_tensor(std::istream& is) {
  const int ndim = read_pod<uint8_t>(is);
  Shape shape(ndim);
  for (int i = 0; i < ndim; ++i) shape[i] = read_pod<int32_t>(is);
  const uint64_t count = read_pod<uint64_t>(is);
  if (static_cast<int64_t>(count) != shape_numel(shape))
    throw ContractError("checkpoint: tensor header inconsistent");
  Tensor t(shape);
  is.read(reinterpret_cast<char*>(t.data_mut()), sizeof(float) * count);
  return t;
}

}  // namespace

Checkpoint Checkpoint::from_params(const std::vector<Parameter*>& params,
                                   nlohmann::json metadata) {
  Checkpoint ckpt;
  ckpt.metadata = std::move(metadata);
  for (const Parameter* p : params) {
    if (ckpt.entries.count(p->name))
      throw ContractError("checkpoint: duplicate parameter " + p->name);
    ckpt.entries[p->name] = {p->value.clone(), p->adam_m.clone(), p->adam_v.clone(), p->step};
  }
  return ckpt;
}

void Checkpoint::load_into(const std::vector<Parameter*>& params) const {
  for (Parameter* p : params) {
    auto it = entries.find(p->name);
    if (it == entries.end())
      throw ContractError("checkpoint: missing parameter " + p->name);
    const CheckpointEntry& e = it->second;
    if (e.value.shape() != p->value.shape())
      throw ContractError("checkpoint: shape mismatch for " + p->name + ": stored " +
                          shape_str(e.value.shape()) + " vs model " +
                          shape_str(p->value.shape()));
    p->value = e.value.clone();
    p->adam_m = e.adam_m.clone();
    p->adam_v = e.adam_v.clone();
    p->step = e.step;
    p->zero_grad();
  }
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ContractError("checkpoint: cannot open " + path + " for writing");
  os.write(kMagic, sizeof(kMagic));
  write_pod<uint32_t>(os, kVersion);
  const std::string meta = ckpt.metadata.dump();
  write_pod<uint64_t>(os, meta.size());
  os.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  write_pod<uint64_t>(os, ckpt.entries.size());
  for (const auto& [name, e] : ckpt.entries) {
    write_pod<uint32_t>(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<int64_t>(os, e.step);
    write_tensor(os, e.value);
    write_tensor(os, e.adam_m);
    write_tensor(os, e.adam_v);
  }
  if (!os) throw ContractError("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ContractError("checkpoint: cannot open " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw ContractError("checkpoint: bad magic in " + path);
  const uint32_t version = read_pod<uint32_t>(is);
  if (version != kVersion)
    throw ContractError("checkpoint: unsupported version " + std::to_string(version));
  Checkpoint ckpt;
  const uint64_t meta_len = read_pod<uint64_t>(is);
  std::string meta(meta_len, '\0');
  is.read(meta.data(), static_cast<std::streamsize>(meta_len));
  ckpt.metadata = meta.empty() ? nlohmann::json() : nlohmann::json::parse(meta);
  const uint64_t count = read_pod<uint64_t>(is);
  for (uint64_t i = 0; i < count; ++i) {
    const uint32_t name_len = read_pod<uint32_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    CheckpointEntry e;
    e.step = read_pod<int64_t>(is);
    e.value = read_tensor(is);
    e.adam_m = read_tensor(is);
    e.adam_v = read_tensor(is);
    ckpt.entries.emplace(std::move(name), std::move(e));
  }
  if (!is) throw ContractError("checkpoint: truncated file " + path);
  return ckpt;
}

}  // namespace director
