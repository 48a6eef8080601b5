#ifndef STSIM_NICSIM_HPP
#define STSIM_NICSIM_HPP

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "stsim/cost_model.hpp"
#include "stsim/memory.hpp"
#include "stsim/simclock.hpp"
#include "stsim/task.hpp"

namespace stsim
{

struct CounterId
{
    int           rank  = -1;
    std::uint32_t index = 0;

    bool valid() const
    {
        return rank >= 0;
    }

    auto operator<=>(const CounterId&) const = default;

    std::string to_string() const;
};

using RegionKey = std::uint64_t;
using EntryId   = std::uint64_t;

struct MemoryRegion
{
    int                      rank = -1;
    RegionKey                key  = 0;
    std::size_t              base = 0;
    std::size_t              len  = 0;
    /// Incremented once per remote write or atomic delivered into the region.
    std::optional<CounterId> remote_write_counter;
};

/// Address of bytes inside a registered region, as a peer would name it.
struct RemoteAddress
{
    int         rank   = -1;
    RegionKey   key    = 0;
    std::size_t offset = 0;
};

struct RemoteWrite
{
    std::size_t   source_offset = 0;
    std::size_t   len           = 0;
    RemoteAddress dest;
};

/// Adds `amount` to the 8-byte slot at `dest`.
struct TriggeredAtomic
{
    RemoteAddress dest;
    std::uint64_t amount = 1;
};

struct DeferredWork
{
    std::variant<RemoteWrite, TriggeredAtomic> op;
    CounterId                                  trigger;
    std::uint64_t                              threshold = 1;
    std::optional<CounterId>                   completion_counter;
    /// Free-form role name surfaced in deadlock reports.
    std::string                                label;
};

struct ArmedEntry
{
    EntryId       id;
    int           rank;
    std::string   label;
    bool          is_write;
    CounterId     trigger;
    std::uint64_t threshold;
    std::uint64_t counter_value;
};

/// Hooks for tests and trace checkers. Unset members are skipped.
struct FabricObserver
{
    std::function<void(CounterId, std::uint64_t before, std::uint64_t after)> counter_changed;
    std::function<void(EntryId, int rank, const DeferredWork&)>               entry_fired;
    /// Fires after the destination bytes have been written.
    std::function<void(int dest_rank, std::size_t offset, std::size_t len, EntryId)>
        write_delivered;
    /// Fires after the destination slot has been updated.
    std::function<void(int dest_rank, std::size_t offset, EntryId)> atomic_delivered;
};

/// Simulated Slingshot-style NICs, one per rank, plus the wire between them.
class Fabric
{
public:
    Fabric(Simulator& sim, const CostModel& cost, int ranks);
    ~Fabric();

    Fabric(const Fabric&)            = delete;
    Fabric& operator=(const Fabric&) = delete;

    int size() const
    {
        return static_cast<int>(nics_.size());
    }

    RankMemory& memory(int rank);

    // -- counters ------------------------------------------------------------

    CounterId     alloc_counter(int rank);
    /// Throws when entries are still armed on the counter.
    void          free_counter(CounterId id);
    std::uint64_t increment_counter(CounterId id, std::uint64_t amount = 1);
    std::uint64_t counter_value(CounterId id) const;
    /// Host-visible shadow; refreshed only by host_progress().
    std::uint64_t writeback(CounterId id) const;
    void          host_progress(int rank);
    std::size_t   live_counters(int rank) const;

    // -- memory regions ------------------------------------------------------

    /// Registers [base, base+len) of the rank's memory. Allocates a fresh
    /// counter, starting at zero, iff count_remote_writes is set.
    MemoryRegion register_region(int rank, std::size_t base, std::size_t len,
                                 bool count_remote_writes);
    /// Registers a region whose remote writes count on an existing counter.
    MemoryRegion register_region(int rank, std::size_t base, std::size_t len,
                                 CounterId counter);
    /// Releases the region. A counter allocated by the registration is freed
    /// with it.
    void                deregister_region(int rank, RegionKey key);
    const MemoryRegion& region(int rank, RegionKey key) const;
    std::size_t         live_regions(int rank) const;

    // -- deferred work -------------------------------------------------------

    /// Arms an entry, or returns nullopt when the rank's pool is full.
    std::optional<EntryId> try_post_deferred(int rank, DeferredWork work);
    /// Arms an entry, suspending the calling host task while the pool is full.
    Task<EntryId> post_deferred(int rank, DeferredWork work);

    std::uint64_t pool_capacity() const
    {
        return cost_.dwq_pool_capacity;
    }
    std::uint64_t pool_in_use(int rank) const;
    std::uint64_t pool_high_water(int rank) const;

    std::vector<ArmedEntry> armed_entries() const;

    /// Entries that have executed since construction.
    std::uint64_t fired_total() const
    {
        return fired_total_;
    }

    void set_observer(FabricObserver observer)
    {
        observer_ = std::move(observer);
    }

    Simulator& sim()
    {
        return sim_;
    }
    const CostModel& cost() const
    {
        return cost_;
    }

private:
    struct Counter
    {
        bool          live      = false;
        std::uint64_t value     = 0;
        std::uint64_t writeback = 0;
        /// (threshold, arming order) -> entry
        std::map<std::pair<std::uint64_t, std::uint64_t>, EntryId> watchers;
    };

    struct Entry
    {
        int          rank;
        DeferredWork work;
        bool         fired = false;
    };

    struct Nic;

    Nic&       nic(int rank);
    const Nic& nic(int rank) const;
    Counter&   counter(CounterId id);
    const Counter& counter(CounterId id) const;

    void          validate(int rank, const DeferredWork& work) const;
    EntryId       arm(int rank, DeferredWork work);
    void          fire(EntryId id);
    void          execute_remote_write(EntryId id, Entry& entry, const RemoteWrite& w);
    void          execute_triggered_atomic(EntryId id, Entry& entry, const TriggeredAtomic& a);
    void          retire(EntryId id);
    const MemoryRegion& resolve(const RemoteAddress& addr) const;
    void          report_pending(std::vector<std::string>& out) const;

    Simulator&                          sim_;
    const CostModel&                    cost_;
    std::vector<std::unique_ptr<Nic>>   nics_;
    std::unordered_map<EntryId, Entry>  entries_;
    std::uint64_t                       fired_total_ = 0;
    EntryId                             next_entry_ = 1;
    std::uint64_t                       arm_seq_    = 0;
    FabricObserver                      observer_;
};

}  // namespace stsim

#endif
