#include "sig/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

#include "sig/errors.hpp"

namespace sig::nn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'S', 'I', 'G', 'G'};
constexpr const char* kKindName = "__kind__";

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const std::filesystem::path& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw InputError(path.string() + ": truncated checkpoint");
  return v;
}

void write_tensor(std::ofstream& out, const std::string& name, const Tensor& t) {
  if (name.size() > 0xFFFF) throw InputError("tensor name too long: " + name);
  put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  put<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
  for (auto d : t.dims()) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size() + 1));
  Tensor kind = Tensor::vector(1, static_cast<double>(static_cast<int>(ckpt.kind)));
  write_tensor(out, kKindName, kind);
  for (const auto& [name, t] : ckpt.tensors) write_tensor(out, name, t);
  if (!out) throw InputError("write failed: " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw InputError(path.string() + ": bad checkpoint magic");
  const auto version = get<std::uint32_t>(in, path);
  if (version != kCheckpointVersion) {
    throw InputError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = get<std::uint32_t>(in, path);
  Checkpoint ck;
  bool have_kind = false;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get<std::uint16_t>(in, path);
    std::string name(len, '\0');
    in.read(name.data(), len);
    const auto rank = get<std::uint8_t>(in, path);
    if (rank != 1 && rank != 2) throw InputError(path.string() + ": unsupported rank for " + name);
    std::vector<std::uint32_t> dims(rank);
    for (auto& d : dims) d = get<std::uint32_t>(in, path);
    const Eigen::Index rows = rank == 1 ? 1 : dims[0];
    const Eigen::Index cols = rank == 1 ? dims[0] : dims[1];
    Mat m(rows, cols);
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!in) throw InputError(path.string() + ": truncated payload for " + name);
    if (name == kKindName) {
      if (m.size() != 1) throw InputError(path.string() + ": malformed kind field");
      ck.kind = static_cast<CheckpointKind>(static_cast<int>(m(0, 0)));
      have_kind = true;
      continue;
    }
    ck.tensors.emplace(std::move(name), Tensor(std::move(m), rank));
  }
  if (!have_kind) throw InputError(path.string() + ": missing kind field");
  return ck;
}

void export_store(const ParamStore& store, const std::string& prefix, Checkpoint& ckpt) {
  for (const auto& n : store.names()) {
    const Tensor& t = store.tensor(n);
    ckpt.tensors.insert_or_assign(prefix + "param/" + n, t);
    const auto& mom = store.moments(n);
    ckpt.tensors.insert_or_assign(prefix + "adam_m/" + n, Tensor(mom.m, t.rank()));
    ckpt.tensors.insert_or_assign(prefix + "adam_v/" + n, Tensor(mom.v, t.rank()));
  }
  for (const auto& n : store.buffer_names()) {
    ckpt.tensors.insert_or_assign(prefix + "buffer/" + n, store.buffer_tensor(n));
  }
  ckpt.tensors.insert_or_assign(prefix + "step", Tensor::vector(1, static_cast<double>(store.step_count())));
}

void import_store(ParamStore& store, const std::string& prefix, const Checkpoint& ckpt) {
  auto fetch = [&](const std::string& key, const Mat& like) -> const Mat& {
    auto it = ckpt.tensors.find(key);
    if (it == ckpt.tensors.end()) throw InputError("checkpoint is missing " + key);
    const Mat& m = it->second.values();
    if (m.rows() != like.rows() || m.cols() != like.cols()) {
      throw ShapeError("checkpoint tensor " + key + " has a different shape than the model");
    }
    return m;
  };
  for (const auto& n : store.names()) {
    store.value(n) = fetch(prefix + "param/" + n, store.value(n));
    auto& mom = store.moments(n);
    mom.m = fetch(prefix + "adam_m/" + n, mom.m);
    mom.v = fetch(prefix + "adam_v/" + n, mom.v);
  }
  for (const auto& n : store.buffer_names()) {
    store.buffer(n) = fetch(prefix + "buffer/" + n, store.buffer(n));
  }
  const Mat& step = fetch(prefix + "step", Mat::Zero(1, 1));
  store.set_step_count(static_cast<std::uint64_t>(step(0, 0)));
  store.zero_grad();
}

}  // namespace sig::nn
