#ifndef STSIM_MEMORY_HPP
#define STSIM_MEMORY_HPP

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "stsim/simclock.hpp"

namespace stsim
{

/// A byte range in one rank's memory.
struct BufferRef
{
    int         rank   = 0;
    std::size_t offset = 0;
    std::size_t len    = 0;
};

/// Flat byte space standing in for one rank's host-visible and device memory.
/// Offsets stay valid for the life of the object; spans do not survive a
/// later allocate().
class RankMemory
{
public:
    explicit RankMemory(int rank) : rank_(rank) {}

    RankMemory(const RankMemory&)            = delete;
    RankMemory& operator=(const RankMemory&) = delete;

    int rank() const
    {
        return rank_;
    }

    /// Zero-initialised allocation. Zero-length requests still get a distinct
    /// offset.
    BufferRef allocate(std::size_t len, std::size_t align = 8);

    std::size_t size() const
    {
        return bytes_.size();
    }

    bool contains(std::size_t offset, std::size_t len) const
    {
        return offset <= bytes_.size() && len <= bytes_.size() - offset;
    }

    /// Throws std::out_of_range outside the allocated space.
    std::span<std::byte>       bytes(std::size_t offset, std::size_t len);
    std::span<const std::byte> bytes(std::size_t offset, std::size_t len) const;

    std::span<std::byte> bytes(const BufferRef& ref)
    {
        return bytes(ref.offset, ref.len);
    }

    std::uint64_t load_u64(std::size_t offset) const;
    void          store_u64(std::size_t offset, std::uint64_t value);

    /// Notified whenever the NIC deposits data or atomics into this memory.
    Condition& changed()
    {
        return changed_;
    }

private:
    int                    rank_;
    std::vector<std::byte> bytes_;
    Condition              changed_;
};

}  // namespace stsim

#endif
