#include "stsim/nicsim.hpp"

#include <algorithm>
#include <sstream>

#include "stsim/error.hpp"

namespace stsim
{

std::string CounterId::to_string() const
{
    return "ctr(" + std::to_string(rank) + ":" + std::to_string(index) + ")";
}

struct Fabric::Nic
{
    struct RegionRecord
    {
        MemoryRegion region;
        bool         owns_counter;
    };

    explicit Nic(int rank) : memory(rank) {}

    RankMemory                        memory;
    std::vector<Counter>              counters;
    std::map<RegionKey, RegionRecord> regions;
    RegionKey                         next_key  = 1;
    std::uint64_t                     in_use    = 0;
    std::uint64_t                     high_water = 0;
    Condition                         pool_freed;
};

Fabric::Fabric(Simulator& sim, const CostModel& cost, int ranks) : sim_(sim), cost_(cost)
{
    if (ranks <= 0)
    {
        throw Error(Errc::invalid_argument, "fabric needs at least one rank");
    }
    for (int r = 0; r < ranks; ++r)
    {
        nics_.push_back(std::make_unique<Nic>(r));
    }
    sim_.add_pending_work_reporter([this](std::vector<std::string>& out) { report_pending(out); });
}

Fabric::~Fabric() = default;

Fabric::Nic& Fabric::nic(int rank)
{
    if (rank < 0 || rank >= size())
    {
        throw Error(Errc::invalid_rank, "no NIC for rank " + std::to_string(rank));
    }
    return *nics_[static_cast<std::size_t>(rank)];
}

const Fabric::Nic& Fabric::nic(int rank) const
{
    if (rank < 0 || rank >= size())
    {
        throw Error(Errc::invalid_rank, "no NIC for rank " + std::to_string(rank));
    }
    return *nics_[static_cast<std::size_t>(rank)];
}

RankMemory& Fabric::memory(int rank)
{
    return nic(rank).memory;
}

Fabric::Counter& Fabric::counter(CounterId id)
{
    Nic& n = nic(id.rank);
    if (id.index >= n.counters.size() || !n.counters[id.index].live)
    {
        throw Error(Errc::unknown_counter, id.to_string());
    }
    return n.counters[id.index];
}

const Fabric::Counter& Fabric::counter(CounterId id) const
{
    const Nic& n = nic(id.rank);
    if (id.index >= n.counters.size() || !n.counters[id.index].live)
    {
        throw Error(Errc::unknown_counter, id.to_string());
    }
    return n.counters[id.index];
}

CounterId Fabric::alloc_counter(int rank)
{
    Nic& n = nic(rank);
    n.counters.push_back(Counter{});
    n.counters.back().live = true;
    return CounterId{rank, static_cast<std::uint32_t>(n.counters.size() - 1)};
}

void Fabric::free_counter(CounterId id)
{
    Counter& c = counter(id);
    if (!c.watchers.empty())
    {
        throw Error(Errc::request_busy, id.to_string() + " still has armed entries");
    }
    c.live = false;
}

std::size_t Fabric::live_counters(int rank) const
{
    const Nic& n = nic(rank);
    return static_cast<std::size_t>(
        std::count_if(n.counters.begin(), n.counters.end(), [](const Counter& c) { return c.live; }));
}

std::uint64_t Fabric::increment_counter(CounterId id, std::uint64_t amount)
{
    Counter&      c      = counter(id);
    std::uint64_t before = c.value;
    c.value += amount;
    if (observer_.counter_changed)
    {
        observer_.counter_changed(id, before, c.value);
    }

    std::vector<EntryId> ready;
    for (auto it = c.watchers.begin(); it != c.watchers.end() && it->first.first <= c.value;)
    {
        ready.push_back(it->second);
        it = c.watchers.erase(it);
    }
    for (EntryId e : ready)
    {
        fire(e);
    }
    return c.value;
}

std::uint64_t Fabric::counter_value(CounterId id) const
{
    return counter(id).value;
}

std::uint64_t Fabric::writeback(CounterId id) const
{
    return counter(id).writeback;
}

void Fabric::host_progress(int rank)
{
    for (auto& c : nic(rank).counters)
    {
        if (c.live)
        {
            c.writeback = c.value;
        }
    }
}

MemoryRegion Fabric::register_region(int rank, std::size_t base, std::size_t len,
                                     bool count_remote_writes)
{
    Nic& n = nic(rank);
    if (!n.memory.contains(base, len))
    {
        throw Error(Errc::invalid_argument, "region outside rank " + std::to_string(rank) +
                                                " memory");
    }
    MemoryRegion region{rank, n.next_key++, base, len, std::nullopt};
    if (count_remote_writes)
    {
        region.remote_write_counter = alloc_counter(rank);
    }
    n.regions.emplace(region.key, Nic::RegionRecord{region, count_remote_writes});
    return region;
}

MemoryRegion Fabric::register_region(int rank, std::size_t base, std::size_t len,
                                     CounterId bound)
{
    Nic& n = nic(rank);
    if (!n.memory.contains(base, len))
    {
        throw Error(Errc::invalid_argument, "region outside rank " + std::to_string(rank) +
                                                " memory");
    }
    if (bound.rank != rank)
    {
        throw Error(Errc::unknown_counter, "region counter must live on the owning NIC");
    }
    counter(bound);
    MemoryRegion region{rank, n.next_key++, base, len, bound};
    n.regions.emplace(region.key, Nic::RegionRecord{region, false});
    return region;
}

void Fabric::deregister_region(int rank, RegionKey key)
{
    Nic& n  = nic(rank);
    auto it = n.regions.find(key);
    if (it == n.regions.end())
    {
        throw Error(Errc::unknown_region, "rank " + std::to_string(rank) + " key " +
                                              std::to_string(key));
    }
    if (it->second.owns_counter)
    {
        free_counter(*it->second.region.remote_write_counter);
    }
    n.regions.erase(it);
}

const MemoryRegion& Fabric::region(int rank, RegionKey key) const
{
    const Nic& n  = nic(rank);
    auto       it = n.regions.find(key);
    if (it == n.regions.end())
    {
        throw Error(Errc::unknown_region, "rank " + std::to_string(rank) + " key " +
                                              std::to_string(key));
    }
    return it->second.region;
}

std::size_t Fabric::live_regions(int rank) const
{
    return nic(rank).regions.size();
}

const MemoryRegion& Fabric::resolve(const RemoteAddress& addr) const
{
    return region(addr.rank, addr.key);
}

void Fabric::validate(int rank, const DeferredWork& work) const
{
    nic(rank);
    if (work.trigger.rank != rank)
    {
        throw Error(Errc::unknown_counter, "trigger counter must live on the posting NIC");
    }
    counter(work.trigger);
    if (work.completion_counter)
    {
        if (work.completion_counter->rank != rank)
        {
            throw Error(Errc::unknown_counter, "completion counter must live on the posting NIC");
        }
        counter(*work.completion_counter);
    }
    std::visit(
        [&](const auto& op) {
            resolve(op.dest);
            if constexpr (std::is_same_v<std::decay_t<decltype(op)>, RemoteWrite>)
            {
                if (!nic(rank).memory.contains(op.source_offset, op.len))
                {
                    throw Error(Errc::invalid_argument, "write source outside memory");
                }
            }
        },
        work.op);
}

std::optional<EntryId> Fabric::try_post_deferred(int rank, DeferredWork work)
{
    validate(rank, work);
    if (nic(rank).in_use >= cost_.dwq_pool_capacity)
    {
        return std::nullopt;
    }
    return arm(rank, std::move(work));
}

Task<EntryId> Fabric::post_deferred(int rank, DeferredWork work)
{
    validate(rank, work);
    Nic& n = nic(rank);
    if (n.in_use >= cost_.dwq_pool_capacity)
    {
        co_await sim_.wait_until(n.pool_freed, "dwq allocation on nic@" + std::to_string(rank),
                                 [this, &n] { return n.in_use < cost_.dwq_pool_capacity; });
    }
    co_return arm(rank, std::move(work));
}

std::uint64_t Fabric::pool_in_use(int rank) const
{
    return nic(rank).in_use;
}

std::uint64_t Fabric::pool_high_water(int rank) const
{
    return nic(rank).high_water;
}

EntryId Fabric::arm(int rank, DeferredWork work)
{
    Nic& n = nic(rank);
    ++n.in_use;
    n.high_water = std::max(n.high_water, n.in_use);

    EntryId   id        = next_entry_++;
    CounterId trigger   = work.trigger;
    auto      threshold = work.threshold;
    entries_.emplace(id, Entry{rank, std::move(work), false});

    Counter& c = counter(trigger);
    if (c.value >= threshold)
    {
        fire(id);
    }
    else
    {
        c.watchers.emplace(std::make_pair(threshold, arm_seq_++), id);
    }
    return id;
}

void Fabric::fire(EntryId id)
{
    Entry& entry = entries_.at(id);
    entry.fired  = true;
    ++fired_total_;
    if (observer_.entry_fired)
    {
        observer_.entry_fired(id, entry.rank, entry.work);
    }
    if (auto* w = std::get_if<RemoteWrite>(&entry.work.op))
    {
        execute_remote_write(id, entry, *w);
    }
    else
    {
        execute_triggered_atomic(id, entry, std::get<TriggeredAtomic>(entry.work.op));
    }
}

void Fabric::execute_remote_write(EntryId id, Entry& entry, const RemoteWrite& w)
{
    const MemoryRegion* dest = nullptr;
    try
    {
        dest = &resolve(w.dest);
    }
    catch (const Error& e)
    {
        throw SimulationFault(std::string("remote write to stale region: ") + e.what());
    }
    if (w.dest.offset > dest->len || w.len > dest->len - w.dest.offset)
    {
        throw SimulationFault("remote write overflows region " + std::to_string(dest->key) +
                              " on rank " + std::to_string(dest->rank));
    }

    // Source bytes are read when the entry fires.
    auto src = nic(entry.rank).memory.bytes(w.source_offset, w.len);
    std::vector<std::byte> payload(src.begin(), src.end());

    int                      dest_rank = dest->rank;
    std::size_t              address   = dest->base + w.dest.offset;
    std::optional<CounterId> counted   = dest->remote_write_counter;

    sim_.schedule(cost_.transfer_time(w.len), ComponentId{Component::nic, dest_rank, 0},
                  "write_delivered",
                  [this, dest_rank, address, counted, id, payload = std::move(payload)] {
                      RankMemory& mem = nic(dest_rank).memory;
                      std::copy(payload.begin(), payload.end(),
                                mem.bytes(address, payload.size()).begin());
                      if (observer_.write_delivered)
                      {
                          observer_.write_delivered(dest_rank, address, payload.size(), id);
                      }
                      if (counted)
                      {
                          increment_counter(*counted);
                      }
                      sim_.notify(mem.changed());
                  });

    std::optional<CounterId> completion = entry.work.completion_counter;
    sim_.schedule(cost_.injection_time(w.len), ComponentId{Component::nic, entry.rank, 0},
                  "write_local_complete", [this, id, completion] {
                      if (completion)
                      {
                          increment_counter(*completion);
                      }
                      retire(id);
                  });
}

void Fabric::execute_triggered_atomic(EntryId id, Entry& entry, const TriggeredAtomic& a)
{
    const MemoryRegion* dest = nullptr;
    try
    {
        dest = &resolve(a.dest);
    }
    catch (const Error& e)
    {
        throw SimulationFault(std::string("atomic to stale region: ") + e.what());
    }
    std::size_t address = dest->base + a.dest.offset;
    if (a.dest.offset > dest->len || dest->len - a.dest.offset < sizeof(std::uint64_t) ||
        address % sizeof(std::uint64_t) != 0)
    {
        throw SimulationFault("misaligned or out-of-range atomic slot at offset " +
                              std::to_string(a.dest.offset) + " of region " +
                              std::to_string(dest->key) + " on rank " +
                              std::to_string(dest->rank));
    }

    int                      dest_rank  = dest->rank;
    std::optional<CounterId> counted    = dest->remote_write_counter;
    std::optional<CounterId> completion = entry.work.completion_counter;
    std::uint64_t            amount     = a.amount;
    SimTime delay = cost_.atomic_ns + (dest_rank != entry.rank ? cost_.wire_latency_ns : 0);

    sim_.schedule(delay, ComponentId{Component::nic, dest_rank, 0}, "atomic_delivered",
                  [this, id, dest_rank, address, counted, completion, amount] {
                      RankMemory& mem = nic(dest_rank).memory;
                      mem.store_u64(address, mem.load_u64(address) + amount);
                      if (observer_.atomic_delivered)
                      {
                          observer_.atomic_delivered(dest_rank, address, id);
                      }
                      if (counted)
                      {
                          increment_counter(*counted);
                      }
                      if (completion)
                      {
                          increment_counter(*completion);
                      }
                      retire(id);
                      sim_.notify(mem.changed());
                  });
}

void Fabric::retire(EntryId id)
{
    auto it   = entries_.find(id);
    int  rank = it->second.rank;
    entries_.erase(it);
    Nic& n = nic(rank);
    --n.in_use;
    sim_.notify(n.pool_freed);
}

std::vector<ArmedEntry> Fabric::armed_entries() const
{
    std::vector<ArmedEntry> out;
    for (const auto& [id, e] : entries_)
    {
        if (e.fired)
        {
            continue;
        }
        out.push_back(ArmedEntry{id, e.rank, e.work.label,
                                 std::holds_alternative<RemoteWrite>(e.work.op), e.work.trigger,
                                 e.work.threshold, counter(e.work.trigger).value});
    }
    std::sort(out.begin(), out.end(),
              [](const ArmedEntry& a, const ArmedEntry& b) { return a.id < b.id; });
    return out;
}

void Fabric::report_pending(std::vector<std::string>& out) const
{
    for (const auto& e : armed_entries())
    {
        std::ostringstream line;
        line << "nic@" << e.rank << " entry " << e.id << " [" << e.label << "] "
             << (e.is_write ? "remote_write" : "triggered_atomic") << " armed on "
             << e.trigger.to_string() << " threshold " << e.threshold << " (value "
             << e.counter_value << ")";
        out.push_back(line.str());
    }
}

}  // namespace stsim
