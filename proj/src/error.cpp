#include "stsim/error.hpp"

namespace stsim
{

std::string_view to_string(Errc code)
{
    switch (code)
    {
        case Errc::invalid_argument:
            return "invalid argument";
        case Errc::invalid_rank:
            return "invalid rank";
        case Errc::unknown_counter:
            return "unknown counter";
        case Errc::unknown_region:
            return "unknown region";
        case Errc::not_persistent:
            return "request is not persistent";
        case Errc::already_matched:
            return "request already matched";
        case Errc::not_matched:
            return "request not matched";
        case Errc::already_started:
            return "request started without a corresponding wait";
        case Errc::not_started:
            return "request not started";
        case Errc::wrong_queue:
            return "request started on a different queue";
        case Errc::queue_not_empty:
            return "queue has outstanding requests";
        case Errc::unknown_queue_kind:
            return "unknown queue kind";
        case Errc::request_busy:
            return "request is in use";
    }
    return "unknown error";
}

}  // namespace stsim
