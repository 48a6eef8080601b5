#ifndef STSIM_ERROR_HPP
#define STSIM_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace stsim
{

enum class Errc
{
    invalid_argument,
    invalid_rank,
    unknown_counter,
    unknown_region,
    not_persistent,
    already_matched,
    not_matched,
    already_started,
    not_started,
    wrong_queue,
    queue_not_empty,
    unknown_queue_kind,
    request_busy,
};

std::string_view to_string(Errc code);

/// API misuse: the caller passed input the interface defines as erroneous.
class Error : public std::runtime_error
{
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code)
    {
    }

    Errc code() const noexcept
    {
        return code_;
    }

private:
    Errc code_;
};

/// Raised from inside the event loop when simulated hardware is driven outside
/// its envelope (e.g. a write past the end of a memory region).
class SimulationFault : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

}  // namespace stsim

#endif
