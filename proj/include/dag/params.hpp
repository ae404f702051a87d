#pragma once
// Flat parameter storage. Layers register named slices during construction;
// finalize() allocates one contiguous buffer. Gradients and optimizer moments
// reuse the same layout, and checkpoints serialize entries by name so that
// loading is layout-independent.

#include <cstddef>
#include <string>
#include <vector>

#include "dag/core.hpp"

namespace dag {

class ParamArena {
 public:
  struct Entry {
    std::string name;
    std::size_t offset = 0;
    std::size_t size = 0;
    bool trainable = true;
  };

  // Reserve a named slice; returns its offset. Only valid before finalize().
  std::size_t add(std::string name, std::size_t size, bool trainable = true) {
    require_config(!finalized_, "ParamArena: add after finalize");
    require_config(size > 0, "ParamArena: empty entry '" + name + "'");
    for (const Entry& e : entries_) {
      require_config(e.name != name, "ParamArena: duplicate entry '" + name + "'");
    }
    std::size_t off = total_;
    entries_.push_back(Entry{std::move(name), off, size, trainable});
    total_ += size;
    return off;
  }

  void finalize() {
    require_config(!finalized_, "ParamArena: finalize twice");
    values_.assign(total_, 0.0);
    finalized_ = true;
  }

  bool finalized() const { return finalized_; }
  std::size_t size() const { return total_; }
  const std::vector<Entry>& entries() const { return entries_; }

  real* data() { return values_.data(); }
  const real* data() const { return values_.data(); }
  std::vector<real>& values() { return values_; }
  const std::vector<real>& values() const { return values_; }

  const Entry* find(const std::string& name) const {
    for (const Entry& e : entries_) {
      if (e.name == name) return &e;
    }
    return nullptr;
  }

  std::size_t trainable_count() const {
    std::size_t n = 0;
    for (const Entry& e : entries_) {
      if (e.trainable) n += e.size;
    }
    return n;
  }

 private:
  std::vector<Entry> entries_;
  std::vector<real> values_;
  std::size_t total_ = 0;
  bool finalized_ = false;
};

}  // namespace dag
