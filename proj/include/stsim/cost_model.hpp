#ifndef STSIM_COST_MODEL_HPP
#define STSIM_COST_MODEL_HPP

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>

#include "stsim/simclock.hpp"

namespace stsim
{

/// Parametric latency and bandwidth model. All times in virtual ns.
///
/// The first eight fields are the core knobs. The remaining ones cover
/// behaviour the core set leaves open (GPU inter-op dispatch, poll sampling
/// overhead, pack/unpack copy rate, Life update rate).
struct CostModel
{
    SimTime       kernel_launch_ns      = 1000;
    SimTime       gpu_barrier_ns        = 1000;
    /// Full baseline RTS/CTS handshake including matching.
    SimTime       match_setup_ns        = 3000;
    SimTime       wire_latency_ns       = 2000;
    std::uint64_t bandwidth_bytes_per_ns = 25;
    SimTime       atomic_ns             = 500;
    std::uint64_t eager_threshold_bytes = 8192;
    std::uint64_t dwq_pool_capacity     = 500;

    /// Minimum gap between the end of one stream op and the start of the next.
    SimTime       stream_op_gap_ns      = 100;
    /// Extra time a poll_value op takes after its condition is met.
    SimTime       poll_overhead_ns      = 0;
    std::uint64_t gpu_copy_bytes_per_ns = 100;
    std::uint64_t life_cells_per_ns     = 100;

    /// wire_latency_ns + ceil(len / bandwidth_bytes_per_ns)
    SimTime transfer_time(std::uint64_t len) const;

    /// ceil(len / bandwidth_bytes_per_ns): time for a payload to leave the NIC.
    SimTime injection_time(std::uint64_t len) const;

    /// Duration of a pack or unpack kernel body moving `len` bytes.
    SimTime copy_time(std::uint64_t len) const;

    /// Duration of a Life update over `cells` cells.
    SimTime life_update_time(std::uint64_t cells) const;

    /// Throws std::invalid_argument when a rate is zero.
    void validate() const;

    /// Sets a field by its name. Throws std::invalid_argument on unknown keys
    /// or malformed values.
    void set(std::string_view key, std::string_view value);

    /// Flat `key=value` text; blank lines and `#` comments are ignored.
    static CostModel parse(std::string_view text);
    static CostModel load(const std::string& path);

    void write(std::ostream& out) const;

    bool operator==(const CostModel&) const = default;
};

}  // namespace stsim

#endif
