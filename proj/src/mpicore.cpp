#include "stsim/mpicore.hpp"

#include <algorithm>
#include <cstring>
#include <set>

#include "stsim/error.hpp"

namespace stsim
{

namespace
{

// Reserved tags for match-time offers. Sends announce themselves on
// send_offer_tag(t) and learn about their receive on recv_offer_tag(t).
int send_offer_tag(int tag)
{
    return -1 - 2 * tag;
}

int recv_offer_tag(int tag)
{
    return -2 - 2 * tag;
}

std::vector<std::byte> encode(const MatchOffer& offer)
{
    std::vector<std::uint64_t> words;
    words.push_back(static_cast<std::uint64_t>(offer.kind));
    words.push_back(offer.id);
    words.insert(words.end(), offer.words.begin(), offer.words.end());
    std::vector<std::byte> out(words.size() * sizeof(std::uint64_t));
    std::memcpy(out.data(), words.data(), out.size());
    return out;
}

MatchOffer decode(const std::vector<std::byte>& bytes)
{
    if (bytes.size() < 2 * sizeof(std::uint64_t) || bytes.size() % sizeof(std::uint64_t) != 0)
    {
        throw SimulationFault("malformed match offer");
    }
    std::vector<std::uint64_t> words(bytes.size() / sizeof(std::uint64_t));
    std::memcpy(words.data(), bytes.data(), bytes.size());
    MatchOffer offer;
    offer.kind = static_cast<RequestKind>(words[0]);
    offer.id   = words[1];
    offer.words.assign(words.begin() + 2, words.end());
    return offer;
}

}  // namespace

const char* to_string(RequestKind kind)
{
    switch (kind)
    {
        case RequestKind::send:
            return "send";
        case RequestKind::rsend:
            return "rsend";
        case RequestKind::recv:
            return "recv";
    }
    return "?";
}

const char* to_string(RequestState state)
{
    switch (state)
    {
        case RequestState::inactive:
            return "inactive";
        case RequestState::match_pending:
            return "match_pending";
        case RequestState::matched:
            return "matched";
        case RequestState::started:
            return "started";
        case RequestState::complete:
            return "complete";
        case RequestState::freed:
            return "freed";
    }
    return "?";
}

Mpi::Mpi(Simulator& sim, Fabric& fabric) : sim_(sim), fabric_(fabric)
{
    for (int r = 0; r < fabric_.size(); ++r)
    {
        ranks_.push_back(std::make_unique<RankState>());
    }
}

Mpi::~Mpi() = default;

template <class R, class... Args>
R* Mpi::make(Args&&... args)
{
    auto owned = std::make_unique<R>(std::forward<Args>(args)...);
    R*   raw   = owned.get();
    owned_.emplace(raw, std::move(owned));
    return raw;
}

Communicator Mpi::comm_dup(const Communicator& comm)
{
    return Communicator{next_comm_++, comm.size};
}

Mpi::RankState& Mpi::rank_state(int rank)
{
    check_rank(rank, "rank");
    return *ranks_[static_cast<std::size_t>(rank)];
}

void Mpi::check_rank(int rank, const char* what) const
{
    if (rank < 0 || rank >= size())
    {
        throw Error(Errc::invalid_rank, std::string(what) + " " + std::to_string(rank) +
                                            " outside [0, " + std::to_string(size()) + ")");
    }
}

void Mpi::check_peer(const Communicator& comm, int peer) const
{
    if (comm.size != size() || comm.id < 0 || comm.id >= next_comm_)
    {
        throw Error(Errc::invalid_argument, "unknown communicator");
    }
    check_rank(peer, "peer");
}

// -- message engine --------------------------------------------------------

std::vector<std::byte> Mpi::capture(const Transfer& t)
{
    if (t.detached)
    {
        return t.bytes;
    }
    auto src = fabric_.memory(t.rank()).bytes(t.buffer);
    return std::vector<std::byte>(src.begin(), src.end());
}

Transfer* Mpi::post_send(int rank, int dest, int tag, int comm, std::vector<std::byte> payload,
                         Transfer* t)
{
    RankState&    rs  = rank_state(rank);
    std::uint64_t seq = rs.send_seq[ChannelKey{comm, dest, tag}]++;
    std::size_t   len = t->detached ? t->bytes.size() : t->buffer.len;
    const auto&   cost = fabric_.cost();

    Envelope env;
    env.source = rank;
    env.dest   = dest;
    env.tag    = tag;
    env.comm   = comm;
    env.seq    = seq;
    env.len    = len;

    if (len < cost.eager_threshold_bytes)
    {
        ++stats_.eager_messages;
        env.payload = std::move(payload);
        sim_.schedule(cost.transfer_time(len), ComponentId{Component::mpi, dest, 0},
                      "eager_arrival", [this, env = std::move(env)]() mutable {
                          deliver(std::move(env));
                      });
        complete(t);
    }
    else
    {
        ++stats_.rendezvous_messages;
        env.rendezvous = true;
        env.sender     = t;
        sim_.schedule(cost.match_setup_ns / 2, ComponentId{Component::mpi, dest, 0},
                      "rts_arrival", [this, env = std::move(env)]() mutable {
                          deliver(std::move(env));
                      });
    }
    return t;
}

Transfer* Mpi::isend(int rank, BufferRef buffer, int dest, int tag, const Communicator& comm)
{
    check_rank(rank, "rank");
    check_peer(comm, dest);
    if (tag < 0 || tag > max_tag)
    {
        throw Error(Errc::invalid_argument, "tag " + std::to_string(tag) + " out of range");
    }
    if (buffer.rank != rank || !fabric_.memory(rank).contains(buffer.offset, buffer.len))
    {
        throw Error(Errc::invalid_argument, "send buffer not in rank memory");
    }
    Transfer* t = make<Transfer>(Request::Category::nonblocking, rank, next_id_++);
    t->is_send  = true;
    t->peer     = dest;
    t->tag      = tag;
    t->comm     = comm.id;
    t->buffer   = buffer;
    if (buffer.len < fabric_.cost().eager_threshold_bytes)
    {
        return post_send(rank, dest, tag, comm.id, capture(*t), t);
    }
    return post_send(rank, dest, tag, comm.id, {}, t);
}

Transfer* Mpi::irecv(int rank, BufferRef buffer, int source, int tag, const Communicator& comm)
{
    check_rank(rank, "rank");
    check_peer(comm, source);
    if (tag < 0 || tag > max_tag)
    {
        throw Error(Errc::invalid_argument, "tag " + std::to_string(tag) + " out of range");
    }
    if (buffer.rank != rank || !fabric_.memory(rank).contains(buffer.offset, buffer.len))
    {
        throw Error(Errc::invalid_argument, "receive buffer not in rank memory");
    }
    Transfer* t = make<Transfer>(Request::Category::nonblocking, rank, next_id_++);
    t->peer     = source;
    t->tag      = tag;
    t->comm     = comm.id;
    t->buffer   = buffer;
    return post_recv(t);
}

Transfer* Mpi::post_recv(Transfer* t)
{
    RankState& rs = rank_state(t->rank());
    for (auto it = rs.unexpected.begin(); it != rs.unexpected.end(); ++it)
    {
        if (it->source == t->peer && it->tag == t->tag && it->comm == t->comm)
        {
            Envelope env = std::move(*it);
            rs.unexpected.erase(it);
            match(t, std::move(env));
            return t;
        }
    }
    rs.posted.push_back(t);
    return t;
}

void Mpi::deliver(Envelope env)
{
    RankState& rs  = rank_state(env.dest);
    ChannelKey key{env.comm, env.source, env.tag};
    auto&      next = rs.recv_seq[key];
    if (env.seq != next)
    {
        // Overtook an earlier message on the same channel; hold it back.
        rs.reorder[key].emplace(env.seq, std::move(env));
        return;
    }
    ++next;
    process(std::move(env));

    auto held = rs.reorder.find(key);
    while (held != rs.reorder.end() && !held->second.empty() &&
           held->second.begin()->first == next)
    {
        Envelope e = std::move(held->second.begin()->second);
        held->second.erase(held->second.begin());
        ++next;
        process(std::move(e));
    }
    if (held != rs.reorder.end() && held->second.empty())
    {
        rs.reorder.erase(held);
    }
}

void Mpi::process(Envelope env)
{
    RankState& rs = rank_state(env.dest);
    for (auto it = rs.posted.begin(); it != rs.posted.end(); ++it)
    {
        Transfer* r = *it;
        if (r->peer == env.source && r->tag == env.tag && r->comm == env.comm)
        {
            rs.posted.erase(it);
            match(r, std::move(env));
            return;
        }
    }
    ++stats_.unexpected_messages;
    rs.unexpected.push_back(std::move(env));
}

void Mpi::match(Transfer* recv, Envelope env)
{
    if (!env.rendezvous)
    {
        land(recv, env.payload);
        complete(recv);
        return;
    }
    const auto& cost   = fabric_.cost();
    Transfer*   sender = env.sender;
    int         dest   = env.dest;
    sim_.schedule(cost.match_setup_ns - cost.match_setup_ns / 2,
                  ComponentId{Component::mpi, env.source, 0}, "cts_arrival",
                  [this, sender, recv, dest] {
                      const auto& c       = fabric_.cost();
                      auto        payload = capture(*sender);
                      std::size_t len     = payload.size();
                      sim_.schedule(c.transfer_time(len), ComponentId{Component::mpi, dest, 0},
                                    "rndv_data", [this, recv, payload = std::move(payload)] {
                                        land(recv, payload);
                                        complete(recv);
                                    });
                      sim_.schedule(c.injection_time(len),
                                    ComponentId{Component::mpi, sender->rank(), 0},
                                    "rndv_send_done", [this, sender] { complete(sender); });
                  });
}

void Mpi::land(Transfer* recv, const std::vector<std::byte>& payload)
{
    recv->received_len = payload.size();
    if (recv->detached)
    {
        recv->bytes = payload;
        return;
    }
    if (payload.size() > recv->buffer.len)
    {
        throw SimulationFault("message of " + std::to_string(payload.size()) +
                              " bytes truncated by receive of " +
                              std::to_string(recv->buffer.len) + " on rank " +
                              std::to_string(recv->rank()));
    }
    auto dst = fabric_.memory(recv->rank()).bytes(recv->buffer.offset, payload.size());
    std::copy(payload.begin(), payload.end(), dst.begin());
}

void Mpi::complete(Transfer* t)
{
    t->done  = true;
    int rank = t->rank();
    if (t->on_complete)
    {
        t->on_complete(*t);
    }
    if (t->auto_free)
    {
        owned_.erase(t);
    }
    sim_.notify(rank_state(rank).progress);
}

Task<> Mpi::send(int rank, BufferRef buffer, int dest, int tag, const Communicator& comm)
{
    Transfer* t = isend(rank, buffer, dest, tag, comm);
    co_await wait(t);
}

Task<> Mpi::recv(int rank, BufferRef buffer, int source, int tag, const Communicator& comm)
{
    Transfer* t = irecv(rank, buffer, source, tag, comm);
    co_await wait(t);
}

bool Mpi::done(const Request* r) const
{
    switch (r->category())
    {
        case Request::Category::nonblocking:
            return static_cast<const Transfer*>(r)->done;
        case Request::Category::generalized:
            return static_cast<const GeneralizedRequest*>(r)->done;
        case Request::Category::match:
            return static_cast<const MatchRequest*>(r)->done;
        case Request::Category::persistent:
        {
            auto s = static_cast<const PersistentRequest*>(r)->state;
            return s != RequestState::started && s != RequestState::match_pending;
        }
    }
    return false;
}

bool Mpi::test(const Request* request) const
{
    if (request == nullptr)
    {
        throw Error(Errc::invalid_argument, "null request");
    }
    return done(request);
}

void Mpi::finish_wait(Request* r)
{
    switch (r->category())
    {
        case Request::Category::nonblocking:
        case Request::Category::match:
        case Request::Category::generalized:
            owned_.erase(r);
            break;
        case Request::Category::persistent:
        {
            auto* p = static_cast<PersistentRequest*>(r);
            if (p->state == RequestState::complete)
            {
                p->state = p->paired ? RequestState::matched : RequestState::inactive;
            }
            break;
        }
    }
}

Task<> Mpi::wait(Request* request)
{
    if (request == nullptr)
    {
        throw Error(Errc::invalid_argument, "null request");
    }
    if (request->category() == Request::Category::persistent &&
        static_cast<PersistentRequest*>(request)->queue >= 0)
    {
        throw Error(Errc::wrong_queue, "request was started on a queue");
    }
    if (!done(request))
    {
        RankState& rs   = rank_state(request->rank());
        std::string what = "wait on request " + std::to_string(request->id());
        co_await sim_.wait_until(rs.progress, std::move(what),
                                 [this, request] { return done(request); });
    }
    finish_wait(request);
}

Task<> Mpi::wait_all(std::vector<Request*> requests)
{
    for (Request* r : requests)
    {
        co_await wait(r);
    }
}

// -- persistent requests -----------------------------------------------------

PersistentRequest* Mpi::send_init(int rank, BufferRef buffer, int dest, int tag,
                                  const Communicator& comm, bool ready)
{
    check_rank(rank, "rank");
    check_peer(comm, dest);
    if (tag < 0 || tag > max_tag)
    {
        throw Error(Errc::invalid_argument, "tag " + std::to_string(tag) + " out of range");
    }
    if (buffer.rank != rank || !fabric_.memory(rank).contains(buffer.offset, buffer.len))
    {
        throw Error(Errc::invalid_argument, "send buffer not in rank memory");
    }
    persistent_.push_back(
        std::make_unique<PersistentRequest>(Request::Category::persistent, rank, next_id_++));
    PersistentRequest* p = persistent_.back().get();
    p->kind              = ready ? RequestKind::rsend : RequestKind::send;
    p->peer              = dest;
    p->tag               = tag;
    p->comm              = comm;
    p->buffer            = buffer;
    return p;
}

PersistentRequest* Mpi::recv_init(int rank, BufferRef buffer, int source, int tag,
                                  const Communicator& comm)
{
    check_rank(rank, "rank");
    check_peer(comm, source);
    if (tag < 0 || tag > max_tag)
    {
        throw Error(Errc::invalid_argument, "tag " + std::to_string(tag) + " out of range");
    }
    if (buffer.rank != rank || !fabric_.memory(rank).contains(buffer.offset, buffer.len))
    {
        throw Error(Errc::invalid_argument, "receive buffer not in rank memory");
    }
    persistent_.push_back(
        std::make_unique<PersistentRequest>(Request::Category::persistent, rank, next_id_++));
    PersistentRequest* p = persistent_.back().get();
    p->kind              = RequestKind::recv;
    p->peer              = source;
    p->tag               = tag;
    p->comm              = comm;
    p->buffer            = buffer;
    return p;
}

PersistentRequest* Mpi::persistent(std::uint64_t id) const
{
    for (const auto& p : persistent_)
    {
        if (p->id() == id)
        {
            return p.get();
        }
    }
    return nullptr;
}

GeneralizedRequest* Mpi::grequest_start(int rank)
{
    check_rank(rank, "rank");
    return make<GeneralizedRequest>(Request::Category::generalized, rank, next_id_++);
}

void Mpi::grequest_complete(GeneralizedRequest* request)
{
    request->done = true;
    sim_.notify(rank_state(request->rank()).progress);
}

void Mpi::start(PersistentRequest* p)
{
    start_all({p});
}

void Mpi::start_all(const std::vector<PersistentRequest*>& requests)
{
    for (PersistentRequest* p : requests)
    {
        if (p == nullptr || p->state == RequestState::freed)
        {
            throw Error(Errc::invalid_argument, "start of a null or freed request");
        }
        if (p->state == RequestState::started || p->state == RequestState::complete)
        {
            throw Error(Errc::already_started, "request " + std::to_string(p->id()) +
                                                   " started again without a wait");
        }
        if (p->paired || p->state == RequestState::match_pending)
        {
            throw Error(Errc::already_matched,
                        "matched request " + std::to_string(p->id()) +
                            " must be started through a queue");
        }
    }
    for (PersistentRequest* p : requests)
    {
        Transfer* t = p->is_send() ? isend(p->rank(), p->buffer, p->peer, p->tag, p->comm)
                                   : irecv(p->rank(), p->buffer, p->peer, p->tag, p->comm);
        if (t->done)
        {
            owned_.erase(t);
            p->state = RequestState::complete;
            continue;
        }
        p->state       = RequestState::started;
        p->inner       = t;
        t->auto_free   = true;
        t->on_complete = [p](Transfer&) {
            p->state = RequestState::complete;
            p->inner = nullptr;
        };
    }
}

MatchRequest* Mpi::imatch_all(const std::vector<Request*>& requests)
{
    std::set<const Request*> seen;
    int                      rank = -1;
    for (Request* r : requests)
    {
        if (r == nullptr)
        {
            throw Error(Errc::invalid_argument, "null request");
        }
        if (r->category() != Request::Category::persistent)
        {
            throw Error(Errc::not_persistent, "request " + std::to_string(r->id()) +
                                                  " cannot be matched with this API");
        }
        auto* p = static_cast<PersistentRequest*>(r);
        switch (p->state)
        {
            case RequestState::inactive:
                break;
            case RequestState::freed:
                throw Error(Errc::invalid_argument, "freed request");
            case RequestState::started:
            case RequestState::complete:
                throw Error(Errc::request_busy, "request " + std::to_string(r->id()) +
                                                    " is active");
            default:
                throw Error(Errc::already_matched,
                            "request " + std::to_string(r->id()) + " is already matched");
        }
        if (!seen.insert(r).second)
        {
            throw Error(Errc::already_matched,
                        "request " + std::to_string(r->id()) + " listed twice");
        }
        if (rank >= 0 && r->rank() != rank)
        {
            throw Error(Errc::invalid_argument, "requests belong to different ranks");
        }
        rank = r->rank();
    }
    if (rank < 0)
    {
        rank = std::max(sim_.current_rank(), 0);
    }

    MatchRequest* m = make<MatchRequest>(Request::Category::match, rank, next_id_++);
    m->remaining    = requests.size();
    m->done         = requests.empty();

    for (Request* r : requests)
    {
        auto* p = static_cast<PersistentRequest*>(r);
        p->state = RequestState::match_pending;
        m->covered.push_back(p);

        MatchOffer offer;
        offer.kind = p->kind;
        offer.id   = p->id();
        if (hooks_ != nullptr)
        {
            hooks_->prepare(*p, offer);
        }

        int out_tag = p->is_send() ? send_offer_tag(p->tag) : recv_offer_tag(p->tag);
        int in_tag  = p->is_send() ? recv_offer_tag(p->tag) : send_offer_tag(p->tag);

        Transfer* s  = make<Transfer>(Request::Category::nonblocking, rank, next_id_++);
        s->is_send   = true;
        s->detached  = true;
        s->peer      = p->peer;
        s->tag       = out_tag;
        s->comm      = p->comm.id;
        s->bytes     = encode(offer);
        s->auto_free = true;
        post_send(rank, p->peer, out_tag, p->comm.id, capture(*s), s);

        Transfer* in   = make<Transfer>(Request::Category::nonblocking, rank, next_id_++);
        in->detached   = true;
        in->peer       = p->peer;
        in->tag        = in_tag;
        in->comm       = p->comm.id;
        in->auto_free  = true;
        in->on_complete = [this, p, m](Transfer& t) {
            MatchOffer peer = decode(t.bytes);
            p->paired       = true;
            p->pair_id      = peer.id;
            p->peer_kind    = peer.kind;
            if (hooks_ != nullptr)
            {
                hooks_->bind(*p, peer);
            }
            p->state = RequestState::matched;
            if (--m->remaining == 0)
            {
                m->done = true;
            }
        };
        post_recv(in);
    }
    return m;
}

Task<> Mpi::match_all(std::vector<Request*> requests)
{
    MatchRequest* m = imatch_all(requests);
    co_await wait(m);
}

bool Mpi::is_matched(const Request* request) const
{
    if (request == nullptr || request->category() != Request::Category::persistent)
    {
        return false;
    }
    return static_cast<const PersistentRequest*>(request)->paired;
}

void Mpi::request_free(Request* request)
{
    if (request == nullptr)
    {
        throw Error(Errc::invalid_argument, "null request");
    }
    switch (request->category())
    {
        case Request::Category::match:
            throw Error(Errc::request_busy, "match requests cannot be freed or canceled");
        case Request::Category::nonblocking:
        case Request::Category::generalized:
            if (!done(request))
            {
                throw Error(Errc::request_busy, "request still active");
            }
            owned_.erase(request);
            return;
        case Request::Category::persistent:
            break;
    }
    auto* p = static_cast<PersistentRequest*>(request);
    if (p->state == RequestState::freed)
    {
        throw Error(Errc::invalid_argument, "request freed twice");
    }
    if (p->state == RequestState::started || p->state == RequestState::match_pending ||
        p->queue >= 0)
    {
        throw Error(Errc::request_busy, "request " + std::to_string(p->id()) + " still active");
    }
    if (p->paired && hooks_ != nullptr)
    {
        hooks_->release(*p);
    }
    p->resources.reset();
    p->paired = false;
    p->state  = RequestState::freed;
}

}  // namespace stsim
