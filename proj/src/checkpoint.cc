// djtd/checkpoint.cc

#include "djtd/checkpoint.h"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace djtd {

namespace {

constexpr char kMagic[4] = {'D', 'J', 'T', 'D'};
constexpr char kStateMagic[4] = {'D', 'J', 'O', 'S'};

[[noreturn]] void fail(const std::string& path, const std::string& why) {
  throw std::runtime_error("checkpoint '" + path + "': " + why);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write '" + path + "'");
  return os;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read '" + path + "'");
  return is;
}

}  // namespace

void write_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

void write_f64(std::ostream& os, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  write_u64(os, bits);
}

uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("checkpoint: truncated read");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw std::runtime_error("checkpoint: truncated read");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

double read_f64(std::istream& is) {
  uint64_t bits = read_u64(is);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

void write_tensor(std::ostream& os, const Tensor& t) {
  write_u32(os, static_cast<uint32_t>(t.rank()));
  for (int i = 0; i < t.rank(); ++i) write_u32(os, static_cast<uint32_t>(t.dim(i)));
  for (double v : t.values()) write_f64(os, v);
}

Tensor read_tensor(std::istream& is) {
  const uint32_t rank = read_u32(is);
  if (rank == 0 || rank > 2) throw std::runtime_error("checkpoint: bad tensor rank");
  std::vector<int> shape(rank);
  int64_t n = 1;
  for (uint32_t i = 0; i < rank; ++i) {
    shape[i] = static_cast<int>(read_u32(is));
    n *= shape[i];
  }
  std::vector<double> values(static_cast<size_t>(n));
  for (double& v : values) v = read_f64(is);
  return Tensor(std::move(shape), std::move(values));
}

void save_checkpoint(const std::string& path, const std::vector<ParamGroup>& groups) {
  auto os = open_out(path);
  os.write(kMagic, 4);
  write_u32(os, kCheckpointVersion);
  write_u32(os, static_cast<uint32_t>(groups.size()));
  for (const auto& g : groups) {
    write_u32(os, static_cast<uint32_t>(g.name.size()));
    os.write(g.name.data(), static_cast<std::streamsize>(g.name.size()));
    os.put(static_cast<char>(g.gate));
    write_u32(os, static_cast<uint32_t>(g.params.size()));
    for (const auto& t : g.params) write_tensor(os, t);
  }
  if (!os) fail(path, "write failed");
}

std::vector<ParamGroup> load_checkpoint(const std::string& path) {
  auto is = open_in(path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) fail(path, "bad magic");
  const uint32_t version = read_u32(is);
  if (version != kCheckpointVersion)
    fail(path, "format version " + std::to_string(version) + ", expected " +
                   std::to_string(kCheckpointVersion));
  const uint32_t n_groups = read_u32(is);
  std::vector<ParamGroup> groups(n_groups);
  for (auto& g : groups) {
    const uint32_t name_len = read_u32(is);
    g.name.resize(name_len);
    is.read(g.name.data(), name_len);
    const int gate = is.get();
    if (gate < 0 || gate > 7) fail(path, "bad gate code in group '" + g.name + "'");
    g.gate = static_cast<Gate>(gate);
    const uint32_t n_tensors = read_u32(is);
    g.params.reserve(n_tensors);
    for (uint32_t i = 0; i < n_tensors; ++i) g.params.push_back(read_tensor(is));
  }
  return groups;
}

void load_checkpoint_into(const std::string& path, std::vector<ParamGroup>& groups,
                          bool allow_missing) {
  auto loaded = load_checkpoint(path);
  for (const auto& src : loaded) {
    ParamGroup* dst = nullptr;
    for (auto& g : groups)
      if (g.name == src.name) { dst = &g; break; }
    if (dst == nullptr) {
      if (allow_missing) continue;
      fail(path, "file group '" + src.name + "' not present in model");
    }
    if (dst->gate != src.gate) fail(path, "gate mismatch for group '" + src.name + "'");
    if (dst->params.size() != src.params.size())
      fail(path, "tensor count mismatch for group '" + src.name + "'");
    for (size_t i = 0; i < src.params.size(); ++i) {
      Tensor& t = dst->params[i];
      const Tensor& s = src.params[i];
      if (t.shape() != s.shape())
        fail(path, "shape mismatch for group '" + src.name + "' tensor " + std::to_string(i) +
                       ": " + shape_str(t.shape()) + " vs " + shape_str(s.shape()));
      std::copy(s.values().begin(), s.values().end(), t.raw_values().begin());
    }
  }
}

void save_train_state(const std::string& path, const TrainState& state) {
  auto os = open_out(path);
  os.write(kStateMagic, 4);
  write_u32(os, kCheckpointVersion);
  write_u64(os, static_cast<uint64_t>(state.step));
  write_u64(os, static_cast<uint64_t>(state.adam.step_count()));
  const auto& slots = state.adam.slots();
  write_u32(os, static_cast<uint32_t>(slots.size()));
  for (const auto& group : slots) {
    write_u32(os, static_cast<uint32_t>(group.size()));
    for (const auto& slot : group) {
      write_u64(os, slot.m.size());
      for (double v : slot.m) write_f64(os, v);
      for (double v : slot.v) write_f64(os, v);
    }
  }
  if (!os) fail(path, "write failed");
}

TrainState load_train_state(const std::string& path, const AdamConfig& cfg) {
  auto is = open_in(path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kStateMagic, 4) != 0) fail(path, "bad magic");
  if (read_u32(is) != kCheckpointVersion) fail(path, "bad train-state version");
  TrainState state;
  state.adam = Adam(cfg);
  state.step = static_cast<int64_t>(read_u64(is));
  state.adam.set_step_count(static_cast<int64_t>(read_u64(is)));
  auto& slots = state.adam.slots();
  slots.resize(read_u32(is));
  for (auto& group : slots) {
    group.resize(read_u32(is));
    for (auto& slot : group) {
      const uint64_t n = read_u64(is);
      slot.m.resize(n);
      for (double& v : slot.m) v = read_f64(is);
      slot.v.resize(n);
      for (double& v : slot.v) v = read_f64(is);
    }
  }
  return state;
}

}  // namespace djtd
