#pragma once
// Flat named collection of trainable arrays with gradient slots, the binary
// checkpoint container, and the bridge that binds store entries to tape
// leaves for gradient computation.
//
// Naming convention: entries whose name starts with "cfg." are run metadata
// riding inside checkpoints (rank-0 scalars by convention); they are skipped
// by the optimizer and by gradient binding.

#include <bit>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vrf/tape.hpp"

namespace vrf {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

inline bool is_trainable_name(std::string_view name) {
  return !name.starts_with("cfg.");
}

struct ParamEntry {
  std::vector<std::size_t> shape;  // empty = rank-0 scalar
  std::vector<double> value;       // flattened, row-major
  std::vector<double> grad;        // same length, zero-initialized
  std::size_t size() const { return value.size(); }
};

class ParamStore {
 public:
  // Creates a zero-filled entry; errors if the name already exists.
  ParamEntry& add(const std::string& name, std::vector<std::size_t> shape);
  bool has(std::string_view name) const;
  ParamEntry& at(std::string_view name);
  const ParamEntry& at(std::string_view name) const;

  // Rank-0 convenience accessors (used for "cfg.*" metadata).
  void set_scalar(const std::string& name, double v);
  double scalar(std::string_view name) const;

  void zero_grads();
  std::size_t trainable_size() const;  // total scalars over non-"cfg." entries

  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  std::size_t entry_count() const { return entries_.size(); }

  std::uint64_t step_count = 0;  // optimizer steps taken; not serialized

 private:
  std::map<std::string, ParamEntry, std::less<>> entries_;
};

// Checkpoint container: magic "VRF1", version u32, entry count u32; then per
// entry (sorted by name): name length u32 + UTF-8 bytes, rank u32, dims u64
// each, little-endian f64 payload. Round trips are bit-exact.
void save_checkpoint(const ParamStore& store, const std::string& path);
ParamStore load_checkpoint(const std::string& path);

// Tape leaves for every trainable entry, bound in sorted-name order.
struct BoundParams {
  std::map<std::string, std::vector<ad::Id>, std::less<>> ids;

  static BoundParams bind(ad::Tape& tape, const ParamStore& store);
  std::span<const ad::Id> at(std::string_view name) const;
  bool has(std::string_view name) const { return ids.find(name) != ids.end(); }
  // Adds each leaf's gradient into the matching grad slot.
  void write_grads(const ad::Tape& tape, ParamStore& store) const;
};

}  // namespace vrf
