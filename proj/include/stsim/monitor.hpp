#ifndef STSIM_MONITOR_HPP
#define STSIM_MONITOR_HPP

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "stsim/world.hpp"

namespace stsim
{

struct MonitorCounts
{
    /// Regular-send data write fired before its GPU trigger or its CTS.
    std::uint64_t early_send_writes = 0;
    /// Receive buffer changed before the receive's start op executed.
    std::uint64_t early_receive_writes = 0;
    /// Deferred-work entries that fired twice, or never fired.
    std::uint64_t duplicate_fires = 0;
    std::uint64_t missing_fires   = 0;
    /// Counter updates that lowered the value.
    std::uint64_t counter_regressions = 0;

    std::uint64_t total() const
    {
        return early_send_writes + early_receive_writes + duplicate_fires + missing_fires +
               counter_regressions;
    }
};

/// Watches a World through its observer hooks and counts protocol
/// violations. Installs the fabric, GPU and stream-triggered observers, so
/// it must be the only user of those hooks.
class ProtocolMonitor
{
public:
    explicit ProtocolMonitor(World& world);

    ProtocolMonitor(const ProtocolMonitor&)            = delete;
    ProtocolMonitor& operator=(const ProtocolMonitor&) = delete;

    /// Registers a matched persistent request. Call before its first start.
    void track(const PersistentRequest* request);

    /// Checks that every armed entry fired. Call once the run is quiescent.
    void finish();

    const MonitorCounts& counts() const
    {
        return counts_;
    }
    const std::vector<std::string>& messages() const
    {
        return messages_;
    }

private:
    struct SendState
    {
        std::uint64_t triggers = 0;
        std::uint64_t cts      = 0;
        std::uint64_t fires    = 0;
        std::size_t   cts_slot = 0;
    };

    struct RecvState
    {
        int                    rank   = -1;
        std::size_t            base   = 0;
        std::size_t            len    = 0;
        std::uint64_t          starts = 0;
        std::uint64_t          writes = 0;
        std::vector<std::byte> snapshot;
    };

    void violation(std::uint64_t& counter, std::string what);
    std::vector<std::byte> read(const RecvState& r) const;

    World&                                       world_;
    MonitorCounts                                counts_;
    std::vector<std::string>                     messages_;
    std::map<std::uint64_t, SendState>           sends_;
    std::map<CounterId, std::uint64_t>           send_by_trigger_;
    std::map<std::pair<int, std::size_t>, std::uint64_t> send_by_cts_;
    std::map<std::uint64_t, RecvState>           recvs_;
    std::set<EntryId>                            fired_;
    std::map<CounterId, std::uint64_t>           last_value_;
};

}  // namespace stsim

#endif
