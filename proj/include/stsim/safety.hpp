#ifndef STSIM_SAFETY_HPP
#define STSIM_SAFETY_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "stsim/monitor.hpp"

namespace stsim
{

struct ScheduleOptions
{
    /// Lets the initiator's forward message use ready mode as well, which
    /// breaks the ready precondition whenever the responder starts late.
    bool unsafe_forward_ready = false;
};

struct ScheduleReport
{
    std::uint64_t seed       = 0;
    int           ranks      = 0;
    int           pairs      = 0;
    std::uint64_t messages   = 0;
    bool          completed  = false;
    /// Payloads that did not match what their sender packed.
    std::uint64_t bad_payloads = 0;
    MonitorCounts counts;
    std::vector<std::string> notes;

    bool clean() const
    {
        return completed && bad_payloads == 0 && counts.total() == 0;
    }
    std::string summary() const;
};

/// Builds and runs one randomized stream-triggered program from `seed`:
/// random rank count, cost model, message sizes, ping-pong pairs, send
/// modes and host delays. Every run is watched by a ProtocolMonitor.
ScheduleReport run_random_schedule(std::uint64_t seed, const ScheduleOptions& options = {});

}  // namespace stsim

#endif
