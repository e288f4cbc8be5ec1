#pragma once

#include <cstdint>
#include <memory>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pktdelay/numeric.hpp"
#include "pktdelay/topology.hpp"

namespace pktdelay {

// ---------------------------------------------------------------------------
// Counter-based randomness: every draw is a pure function of its key, so a
// (trial, slot, link) outcome never depends on how many other draws were made.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t counter_hash(std::uint64_t master_seed, std::uint64_t trial, std::uint64_t slot,
                                  std::uint64_t key) {
  std::uint64_t h = splitmix64(master_seed ^ 0x5bd1e9955bd1e995ULL);
  h = splitmix64(h ^ trial);
  h = splitmix64(h ^ (slot * 0xd6e8feb86659fd93ULL));
  return splitmix64(h ^ key);
}

/// Uniform double in [0, 1) with 53 random bits.
inline double counter_uniform(std::uint64_t master_seed, std::uint64_t trial, std::uint64_t slot,
                              std::uint64_t key) {
  return static_cast<double>(counter_hash(master_seed, trial, slot, key) >> 11) * 0x1.0p-53;
}

/// Index chosen by a categorical draw `u` in [0, 1) over `weights` (assumed to sum to 1).
inline std::size_t categorical_pick(double u, std::span<const double> weights) {
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
    acc += weights[i];
    if (u < acc) return i;
  }
  return weights.size() - 1;
}

struct TraceProvenance {
  std::uint64_t master_seed = 0;
  std::uint64_t trial = 0;
};

/// Produces the success flags of one slot for every link.
class SlotSource {
 public:
  virtual ~SlotSource() = default;
  virtual std::size_t link_count() const = 0;
  virtual void fill(std::uint64_t slot, std::span<std::uint8_t> row) const = 0;
};

// Independent links succeed with probability 1 - p; each correlation group
// makes one categorical draw per slot.
class ErasureSlotSource final : public SlotSource {
 public:
  ErasureSlotSource(const Topology& t, TraceProvenance provenance) : provenance_(provenance) {
    for (std::size_t l = 0; l < t.link_count(); ++l) {
      if (!t.group_of(l)) {
        independent_.push_back({l, fnv1a64("link:" + t.links()[l].id), 1.0 - t.links()[l].p});
      }
    }
    for (const auto& g : t.groups()) {
      std::string key = "group:";
      for (std::size_t l : g.members) key += t.links()[l].id + ",";
      groups_.push_back({g.members, g.weights, fnv1a64(key), 1.0 - g.base_p});
    }
    link_count_ = t.link_count();
  }

  std::size_t link_count() const override { return link_count_; }

  void fill(std::uint64_t slot, std::span<std::uint8_t> row) const override {
    for (const auto& l : independent_) {
      row[l.index] = counter_uniform(provenance_.master_seed, provenance_.trial, slot, l.key) < l.success;
    }
    for (const auto& g : groups_) {
      for (std::size_t m : g.members) row[m] = 0;
      const double u = counter_uniform(provenance_.master_seed, provenance_.trial, slot, g.key);
      if (u < g.success) row[g.members[categorical_pick(u / g.success, g.weights)]] = 1;
    }
  }

 private:
  struct IndependentLink {
    std::size_t index;
    std::uint64_t key;
    double success;
  };
  struct Group {
    std::vector<std::size_t> members;
    std::vector<double> weights;
    std::uint64_t key;
    double success;
  };
  TraceProvenance provenance_;
  std::vector<IndependentLink> independent_;
  std::vector<Group> groups_;
  std::size_t link_count_ = 0;
};

/// Every link succeeds in every slot.
class AllSuccessSlotSource final : public SlotSource {
 public:
  explicit AllSuccessSlotSource(std::size_t links) : links_(links) {}
  std::size_t link_count() const override { return links_; }
  void fill(std::uint64_t, std::span<std::uint8_t> row) const override {
    for (auto& x : row) x = 1;
  }

 private:
  std::size_t links_;
};

/// Explicit rows for the first slots, all-success afterwards.
class ExplicitSlotSource final : public SlotSource {
 public:
  explicit ExplicitSlotSource(std::vector<std::vector<std::uint8_t>> rows, std::size_t links)
      : rows_(std::move(rows)), links_(links) {}
  std::size_t link_count() const override { return links_; }
  void fill(std::uint64_t slot, std::span<std::uint8_t> row) const override {
    for (std::size_t l = 0; l < links_; ++l) {
      row[l] = slot <= rows_.size() ? rows_[slot - 1].at(l) : 1;
    }
  }

 private:
  std::vector<std::vector<std::uint8_t>> rows_;
  std::size_t links_;
};

/// Per-slot, per-link success flags. Slots are numbered from 1. The
/// materialized horizon grows on demand (doubling); growth never perturbs
/// earlier slots because each row is regenerated from its own key.
class ErasureTrace {
 public:
  ErasureTrace(std::shared_ptr<const SlotSource> source, TraceProvenance provenance, std::uint64_t horizon)
      : source_(std::move(source)), provenance_(provenance), links_(source_->link_count()) {
    extend_to(horizon);
  }

  std::uint64_t horizon() const { return horizon_; }
  std::size_t link_count() const { return links_; }
  const TraceProvenance& provenance() const { return provenance_; }

  void extend_to(std::uint64_t horizon) {
    if (horizon <= horizon_) return;
    flags_.resize(horizon * links_);
    for (std::uint64_t s = horizon_ + 1; s <= horizon; ++s) {
      source_->fill(s, std::span<std::uint8_t>(flags_.data() + (s - 1) * links_, links_));
    }
    horizon_ = horizon;
  }

  /// Makes `slot` available, at least doubling the horizon when growing.
  void ensure(std::uint64_t slot) {
    if (slot > horizon_) extend_to(std::max<std::uint64_t>(slot, std::max<std::uint64_t>(16, 2 * horizon_)));
  }

  std::span<const std::uint8_t> row(std::uint64_t slot) {
    ensure(slot);
    return {flags_.data() + (slot - 1) * links_, links_};
  }

  bool success(std::uint64_t slot, std::size_t link) {
    ensure(slot);
    return flags_[(slot - 1) * links_ + link] != 0;
  }

  bool at(std::uint64_t slot, std::size_t link) const {
    if (slot == 0 || slot > horizon_ || link >= links_) throw std::out_of_range("trace index");
    return flags_[(slot - 1) * links_ + link] != 0;
  }

  /// Inverts one outcome (used for perturbation checks).
  void flip(std::uint64_t slot, std::size_t link) {
    ensure(slot);
    auto& f = flags_[(slot - 1) * links_ + link];
    f = f ? 0 : 1;
  }

  std::shared_ptr<const SlotSource> slot_source() const { return source_; }

 private:
  std::shared_ptr<const SlotSource> source_;
  TraceProvenance provenance_;
  std::size_t links_ = 0;
  std::uint64_t horizon_ = 0;
  std::vector<std::uint8_t> flags_;
};

/// Deterministic in (topology, horizon, master_seed, trial_index).
inline ErasureTrace generate_trace(const Topology& t, std::uint64_t horizon, std::uint64_t master_seed,
                                   std::uint64_t trial_index) {
  TraceProvenance prov{master_seed, trial_index};
  return ErasureTrace(std::make_shared<ErasureSlotSource>(t, prov), prov, std::max<std::uint64_t>(horizon, 1));
}

inline ErasureTrace all_success_trace(const Topology& t, std::uint64_t horizon = 16) {
  return ErasureTrace(std::make_shared<AllSuccessSlotSource>(t.link_count()), {}, horizon);
}

inline ErasureTrace explicit_trace(const Topology& t, std::vector<std::vector<std::uint8_t>> rows) {
  const std::uint64_t h = std::max<std::uint64_t>(rows.size(), 1);
  return ErasureTrace(std::make_shared<ExplicitSlotSource>(std::move(rows), t.link_count()), {}, h);
}

/// Debug dump: columns slot,link-id,success.
inline void write_trace_csv(std::ostream& out, const Topology& t, const ErasureTrace& trace) {
  out << "slot,link-id,success\n";
  for (std::uint64_t s = 1; s <= trace.horizon(); ++s) {
    for (std::size_t l = 0; l < t.link_count(); ++l) {
      out << s << ',' << t.links()[l].id << ',' << (trace.at(s, l) ? 1 : 0) << '\n';
    }
  }
}

}  // namespace pktdelay
