#include "stsim/memory.hpp"

#include <cstring>
#include <stdexcept>
#include <string>

namespace stsim
{

BufferRef RankMemory::allocate(std::size_t len, std::size_t align)
{
    if (align == 0 || (align & (align - 1)) != 0)
    {
        throw std::invalid_argument("allocate: alignment must be a power of two");
    }
    std::size_t offset = (bytes_.size() + align - 1) & ~(align - 1);
    // Keep zero-length buffers distinct from their successor.
    std::size_t reserve = len == 0 ? 1 : len;
    bytes_.resize(offset + reserve, std::byte{0});
    return BufferRef{rank_, offset, len};
}

std::span<std::byte> RankMemory::bytes(std::size_t offset, std::size_t len)
{
    if (!contains(offset, len))
    {
        throw std::out_of_range("rank " + std::to_string(rank_) + ": bytes [" +
                                std::to_string(offset) + ", +" + std::to_string(len) +
                                ") outside memory");
    }
    return std::span<std::byte>(bytes_).subspan(offset, len);
}

std::span<const std::byte> RankMemory::bytes(std::size_t offset, std::size_t len) const
{
    if (!contains(offset, len))
    {
        throw std::out_of_range("rank " + std::to_string(rank_) + ": bytes [" +
                                std::to_string(offset) + ", +" + std::to_string(len) +
                                ") outside memory");
    }
    return std::span<const std::byte>(bytes_).subspan(offset, len);
}

std::uint64_t RankMemory::load_u64(std::size_t offset) const
{
    std::uint64_t v = 0;
    std::memcpy(&v, bytes(offset, sizeof v).data(), sizeof v);
    return v;
}

void RankMemory::store_u64(std::size_t offset, std::uint64_t value)
{
    std::memcpy(bytes(offset, sizeof value).data(), &value, sizeof value);
}

}  // namespace stsim
