#include "vrf/param_store.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace vrf {

ParamEntry& ParamStore::add(const std::string& name,
                            std::vector<std::size_t> shape) {
  if (entries_.count(name))
    throw std::invalid_argument("ParamStore::add: duplicate entry " + name);
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  ParamEntry e;
  e.shape = std::move(shape);
  e.value.assign(n, 0.0);
  e.grad.assign(n, 0.0);
  return entries_.emplace(name, std::move(e)).first->second;
}

bool ParamStore::has(std::string_view name) const {
  return entries_.find(name) != entries_.end();
}

ParamEntry& ParamStore::at(std::string_view name) {
  auto it = entries_.find(name);
  if (it == entries_.end())
    throw std::out_of_range("ParamStore: no entry named " + std::string(name));
  return it->second;
}

const ParamEntry& ParamStore::at(std::string_view name) const {
  auto it = entries_.find(name);
  if (it == entries_.end())
    throw std::out_of_range("ParamStore: no entry named " + std::string(name));
  return it->second;
}

void ParamStore::set_scalar(const std::string& name, double v) {
  if (!has(name)) add(name, {});
  at(name).value[0] = v;
}

double ParamStore::scalar(std::string_view name) const {
  const ParamEntry& e = at(name);
  if (e.size() != 1)
    throw std::invalid_argument("ParamStore::scalar: entry " +
                                std::string(name) + " is not rank-0");
  return e.value[0];
}

void ParamStore::zero_grads() {
  for (auto& [name, e] : entries_)
    std::fill(e.grad.begin(), e.grad.end(), 0.0);
}

std::size_t ParamStore::trainable_size() const {
  std::size_t n = 0;
  for (const auto& [name, e] : entries_)
    if (is_trainable_name(name)) n += e.size();
  return n;
}

namespace {

constexpr char kMagic[4] = {'V', 'R', 'F', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& what) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint: truncated while reading " + what);
  return v;
}

}  // namespace

void save_checkpoint(const ParamStore& store, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  out.write(kMagic, 4);
  write_pod(out, kVersion);
  write_pod(out, static_cast<std::uint32_t>(store.entry_count()));
  for (const auto& [name, e] : store) {  // std::map iterates sorted by name
    write_pod(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod(out, static_cast<std::uint32_t>(e.shape.size()));
    for (std::size_t d : e.shape) write_pod(out, static_cast<std::uint64_t>(d));
    out.write(reinterpret_cast<const char*>(e.value.data()),
              static_cast<std::streamsize>(e.value.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

ParamStore load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string_view(magic, 4) != std::string_view(kMagic, 4))
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const auto version = read_pod<std::uint32_t>(in, "version");
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported version " +
                             std::to_string(version));
  const auto count = read_pod<std::uint32_t>(in, "entry count");
  ParamStore store;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = read_pod<std::uint32_t>(in, "name length");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw std::runtime_error("checkpoint: truncated entry name");
    const auto rank = read_pod<std::uint32_t>(in, "rank");
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape)
      d = static_cast<std::size_t>(read_pod<std::uint64_t>(in, "dimension"));
    ParamEntry& e = store.add(name, std::move(shape));
    in.read(reinterpret_cast<char*>(e.value.data()),
            static_cast<std::streamsize>(e.value.size() * sizeof(double)));
    if (!in) throw std::runtime_error("checkpoint: truncated payload of " + name);
  }
  return store;
}

BoundParams BoundParams::bind(ad::Tape& tape, const ParamStore& store) {
  BoundParams bound;
  for (const auto& [name, e] : store) {
    if (!is_trainable_name(name)) continue;
    std::vector<ad::Id> ids(e.size());
    for (std::size_t i = 0; i < e.size(); ++i) ids[i] = tape.leaf(e.value[i]);
    bound.ids.emplace(name, std::move(ids));
  }
  return bound;
}

std::span<const ad::Id> BoundParams::at(std::string_view name) const {
  auto it = ids.find(name);
  if (it == ids.end())
    throw std::out_of_range("BoundParams: no entry named " + std::string(name));
  return it->second;
}

void BoundParams::write_grads(const ad::Tape& tape, ParamStore& store) const {
  for (const auto& [name, leaf_ids] : ids) {
    ParamEntry& e = store.at(name);
    if (e.size() != leaf_ids.size())
      throw std::logic_error("BoundParams: shape drifted for " + name);
    for (std::size_t i = 0; i < leaf_ids.size(); ++i)
      e.grad[i] += tape.grad(leaf_ids[i]);
  }
}

}  // namespace vrf
