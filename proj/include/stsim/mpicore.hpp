#ifndef STSIM_MPICORE_HPP
#define STSIM_MPICORE_HPP

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "stsim/memory.hpp"
#include "stsim/nicsim.hpp"
#include "stsim/simclock.hpp"
#include "stsim/task.hpp"

namespace stsim
{

struct Communicator
{
    int id   = 0;
    int size = 0;

    bool operator==(const Communicator&) const = default;
};

/// Largest user tag. Negative tags are reserved for match-time exchange.
constexpr int max_tag = (1 << 29) - 1;

class Request
{
public:
    enum class Category
    {
        nonblocking,
        persistent,
        generalized,
        match,
    };

    Request(Category category, int rank, std::uint64_t id)
        : category_(category), rank_(rank), id_(id)
    {
    }
    virtual ~Request() = default;

    Request(const Request&)            = delete;
    Request& operator=(const Request&) = delete;

    Category category() const
    {
        return category_;
    }
    int rank() const
    {
        return rank_;
    }
    std::uint64_t id() const
    {
        return id_;
    }

private:
    Category      category_;
    int           rank_;
    std::uint64_t id_;
};

/// isend/irecv handle. Released by the wait that completes it.
class Transfer : public Request
{
public:
    using Request::Request;

    bool                   is_send = false;
    int                    peer    = -1;
    int                    tag     = 0;
    int                    comm    = 0;
    BufferRef              buffer;
    /// Internal transfers carry bytes outside rank memory.
    bool                   detached = false;
    std::vector<std::byte> bytes;
    std::size_t            received_len = 0;
    bool                   done         = false;
    bool                   auto_free    = false;
    std::function<void(Transfer&)> on_complete;
};

class GeneralizedRequest : public Request
{
public:
    using Request::Request;
    bool done = false;
};

enum class RequestKind
{
    send,
    rsend,
    recv,
};

const char* to_string(RequestKind kind);

enum class RequestState
{
    inactive,
    match_pending,
    matched,
    started,
    complete,
    freed,
};

const char* to_string(RequestState state);

class PersistentRequest : public Request
{
public:
    using Request::Request;

    RequestKind  kind  = RequestKind::send;
    int          peer  = -1;
    int          tag   = 0;
    Communicator comm;
    BufferRef    buffer;
    RequestState state = RequestState::inactive;

    // Set once matched; immutable until freed.
    bool          paired    = false;
    std::uint64_t pair_id   = 0;
    RequestKind   peer_kind = RequestKind::send;

    // Stream-triggered bookkeeping, owned by the queue layer.
    std::uint64_t         epoch = 0;
    int                   queue = -1;
    std::shared_ptr<void> resources;

    // Plain start path.
    Transfer* inner = nullptr;

    bool is_send() const
    {
        return kind != RequestKind::recv;
    }
};

class MatchRequest : public Request
{
public:
    using Request::Request;
    std::vector<PersistentRequest*> covered;
    std::size_t                     remaining = 0;
    bool                            done      = false;
};

/// Payload exchanged between the two sides of a pair during matching.
struct MatchOffer
{
    RequestKind                kind = RequestKind::send;
    std::uint64_t              id   = 0;
    std::vector<std::uint64_t> words;
};

/// Lets a transport attach resources to requests while they are matched.
class MatchHooks
{
public:
    virtual ~MatchHooks() = default;
    /// Allocates local resources and fills the words shipped to the peer.
    virtual void prepare(PersistentRequest& request, MatchOffer& offer) = 0;
    /// Records the peer's offer. Runs when the counterpart offer arrives.
    virtual void bind(PersistentRequest& request, const MatchOffer& peer) = 0;
    virtual void release(PersistentRequest& request) = 0;
};

struct MpiStats
{
    std::uint64_t eager_messages      = 0;
    std::uint64_t rendezvous_messages = 0;
    std::uint64_t unexpected_messages = 0;
};

/// Host-side two-sided messaging over the simulated fabric: tag matching,
/// eager and rendezvous transfers, persistent requests, and match_all.
class Mpi
{
public:
    Mpi(Simulator& sim, Fabric& fabric);
    ~Mpi();

    Mpi(const Mpi&)            = delete;
    Mpi& operator=(const Mpi&) = delete;

    int size() const
    {
        return fabric_.size();
    }

    Communicator world() const
    {
        return Communicator{0, size()};
    }
    Communicator comm_dup(const Communicator& comm);

    // -- nonblocking and blocking point-to-point ------------------------------

    Transfer* isend(int rank, BufferRef buffer, int dest, int tag, const Communicator& comm);
    Transfer* irecv(int rank, BufferRef buffer, int source, int tag, const Communicator& comm);
    Task<>    send(int rank, BufferRef buffer, int dest, int tag, const Communicator& comm);
    Task<>    recv(int rank, BufferRef buffer, int source, int tag, const Communicator& comm);

    /// Completes any request kind. Nonblocking and match requests are released
    /// on return; persistent requests become inactive (or matched) again.
    Task<> wait(Request* request);
    Task<> wait_all(std::vector<Request*> requests);
    bool   test(const Request* request) const;

    // -- persistent requests --------------------------------------------------

    PersistentRequest* send_init(int rank, BufferRef buffer, int dest, int tag,
                                 const Communicator& comm, bool ready = false);
    PersistentRequest* recv_init(int rank, BufferRef buffer, int source, int tag,
                                 const Communicator& comm);
    GeneralizedRequest* grequest_start(int rank);
    void                grequest_complete(GeneralizedRequest* request);

    /// Plain MPI_Start for unmatched persistent requests.
    void start(PersistentRequest* request);
    void start_all(const std::vector<PersistentRequest*>& requests);

    MatchRequest* imatch_all(const std::vector<Request*>& requests);
    Task<>        match_all(std::vector<Request*> requests);
    bool          is_matched(const Request* request) const;

    void request_free(Request* request);

    void set_match_hooks(MatchHooks* hooks)
    {
        hooks_ = hooks;
    }

    PersistentRequest* persistent(std::uint64_t id) const;

    const MpiStats& stats() const
    {
        return stats_;
    }
    std::size_t live_transfers() const
    {
        return owned_.size();
    }

    Simulator& sim()
    {
        return sim_;
    }
    Fabric& fabric()
    {
        return fabric_;
    }

private:
    using ChannelKey = std::tuple<int, int, int>;  // comm, peer, tag

    struct Envelope
    {
        int                    source = -1;
        int                    dest   = -1;
        int                    tag    = 0;
        int                    comm   = 0;
        std::uint64_t          seq    = 0;
        bool                   rendezvous = false;
        std::size_t            len    = 0;
        std::vector<std::byte> payload;
        Transfer*              sender = nullptr;
    };

    struct RankState
    {
        std::deque<Transfer*>                               posted;
        std::deque<Envelope>                                unexpected;
        std::map<ChannelKey, std::uint64_t>                 send_seq;
        std::map<ChannelKey, std::uint64_t>                 recv_seq;
        std::map<ChannelKey, std::map<std::uint64_t, Envelope>> reorder;
        Condition                                           progress;
    };

    template <class R, class... Args>
    R* make(Args&&... args);

    RankState& rank_state(int rank);
    void       check_rank(int rank, const char* what) const;
    void       check_peer(const Communicator& comm, int peer) const;

    Transfer* post_send(int rank, int dest, int tag, int comm, std::vector<std::byte> payload,
                        Transfer* t);
    Transfer* post_recv(Transfer* t);
    void      deliver(Envelope env);
    void      process(Envelope env);
    void      match(Transfer* recv, Envelope env);
    void      land(Transfer* recv, const std::vector<std::byte>& payload);
    void      complete(Transfer* t);
    void      release(Request* r);
    bool      done(const Request* r) const;
    std::vector<std::byte> capture(const Transfer& t);
    void      finish_wait(Request* r);

    Simulator&                                             sim_;
    Fabric&                                                fabric_;
    std::vector<std::unique_ptr<RankState>>                ranks_;
    std::unordered_map<const Request*, std::unique_ptr<Request>> owned_;
    std::vector<std::unique_ptr<PersistentRequest>>        persistent_;
    std::uint64_t                                          next_id_   = 1;
    int                                                    next_comm_ = 1;
    MatchHooks*                                            hooks_     = nullptr;
    MpiStats                                               stats_;
};

}  // namespace stsim

#endif
