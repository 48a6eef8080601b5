#include "stsim/stqueue.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include "stsim/error.hpp"

namespace stsim
{

StRuntime::StRuntime(Mpi& mpi, Gpu& gpu) : mpi_(mpi), gpu_(gpu), fabric_(mpi.fabric())
{
    mpi_.set_match_hooks(this);
}

StRuntime::~StRuntime()
{
    mpi_.set_match_hooks(nullptr);
}

StQueue* StRuntime::queue_init(QueueKind kind, StreamId stream)
{
    if (kind != QueueKind::cxi)
    {
        throw Error(Errc::unknown_queue_kind,
                    "queue kind " + std::to_string(static_cast<int>(kind)));
    }
    // Validates the stream.
    gpu_.idle(stream);
    auto q     = std::make_unique<StQueue>();
    q->id_     = static_cast<int>(queues_.size());
    q->kind_   = kind;
    q->stream_ = stream;
    q->shared_ = fabric_.alloc_counter(stream.rank);
    queues_.push_back(std::move(q));
    return queues_.back().get();
}

StQueue& StRuntime::live(StQueue* queue) const
{
    if (queue == nullptr || queue->freed_)
    {
        throw Error(Errc::invalid_argument, "null or freed queue");
    }
    return *queue;
}

void StRuntime::queue_free(StQueue* queue)
{
    StQueue& q = live(queue);
    if (!q.outstanding_.empty())
    {
        throw Error(Errc::queue_not_empty, "queue " + std::to_string(q.id_) + " has " +
                                               std::to_string(q.outstanding_.size()) +
                                               " outstanding request(s)");
    }
    fabric_.free_counter(q.shared_);
    q.freed_ = true;
}

PersistentRequest* StRuntime::persistent_arg(Request* r) const
{
    if (r == nullptr)
    {
        throw Error(Errc::invalid_argument, "null request");
    }
    if (r->category() != Request::Category::persistent)
    {
        throw Error(Errc::not_persistent, "request " + std::to_string(r->id()) +
                                              " is not a persistent request");
    }
    auto* p = static_cast<PersistentRequest*>(r);
    if (p->state == RequestState::freed)
    {
        throw Error(Errc::invalid_argument, "request " + std::to_string(r->id()) + " was freed");
    }
    return p;
}

StResources& StRuntime::res(PersistentRequest& request) const
{
    if (!request.resources)
    {
        throw Error(Errc::not_matched, "request " + std::to_string(request.id()) +
                                           " has no stream-triggered resources");
    }
    return *std::static_pointer_cast<StResources>(request.resources);
}

const StResources* StRuntime::resources(const PersistentRequest* request) const
{
    if (request == nullptr || !request->resources)
    {
        return nullptr;
    }
    return static_cast<const StResources*>(request->resources.get());
}

// -- match hooks -------------------------------------------------------------

void StRuntime::prepare(PersistentRequest& p, MatchOffer& offer)
{
    int         rank = p.rank();
    RankMemory& mem  = fabric_.memory(rank);
    auto        r    = std::make_shared<StResources>();
    r->kind          = p.kind;

    BufferRef slot = mem.allocate(sizeof(std::uint64_t));
    r->slot_region = fabric_.register_region(rank, slot.offset, slot.len, false);

    switch (p.kind)
    {
        case RequestKind::send:
        {
            r->trigger          = fabric_.alloc_counter(rank);
            r->write_completion = fabric_.alloc_counter(rank);
            BufferRef cts       = mem.allocate(sizeof(std::uint64_t));
            r->cts_region       = fabric_.register_region(rank, cts.offset, cts.len, *r->trigger);
            offer.words.push_back(r->cts_region->key);
            break;
        }
        case RequestKind::rsend:
            r->write_completion = fabric_.alloc_counter(rank);
            break;
        case RequestKind::recv:
            r->data_region = fabric_.register_region(rank, p.buffer.offset, p.buffer.len, true);
            r->trigger     = r->data_region->remote_write_counter;
            offer.words.push_back(r->data_region->key);
            break;
    }
    p.resources = std::move(r);
}

void StRuntime::bind(PersistentRequest& p, const MatchOffer& peer)
{
    StResources& r = res(p);
    if (p.is_send())
    {
        if (peer.kind != RequestKind::recv || peer.words.size() != 1)
        {
            throw SimulationFault("send matched with a non-receive offer");
        }
        r.data_dest = RemoteAddress{p.peer, peer.words[0], 0};
        return;
    }
    if (peer.kind == RequestKind::send)
    {
        if (peer.words.size() != 1)
        {
            throw SimulationFault("regular send offer without a CTS key");
        }
        r.peer_cts = RemoteAddress{p.peer, peer.words[0], 0};
    }
}

void StRuntime::release(PersistentRequest& p)
{
    if (!p.resources)
    {
        return;
    }
    StResources& r    = res(p);
    int          rank = p.rank();
    fabric_.deregister_region(rank, r.slot_region.key);
    if (r.cts_region)
    {
        fabric_.deregister_region(rank, r.cts_region->key);
    }
    if (r.data_region)
    {
        fabric_.deregister_region(rank, r.data_region->key);
    }
    else if (r.trigger)
    {
        fabric_.free_counter(*r.trigger);
    }
    if (r.write_completion)
    {
        fabric_.free_counter(*r.write_completion);
    }
    p.resources.reset();
}

// -- enqueue -------------------------------------------------------------------

std::vector<DeferredWork> StRuntime::plan(PersistentRequest& p, StQueue& q,
                                          std::uint64_t shared_threshold)
{
    StResources&  r     = res(p);
    int           rank  = p.rank();
    std::uint64_t epoch = p.epoch;
    RemoteAddress slot{rank, r.slot_region.key, 0};

    std::vector<DeferredWork> out;
    switch (p.kind)
    {
        case RequestKind::send:
            // Even rule: one bump from the GPU plus one from the CTS per start.
            out.push_back(DeferredWork{RemoteWrite{p.buffer.offset, p.buffer.len, r.data_dest},
                                       *r.trigger, 2 * epoch, r.write_completion,
                                       "send data write"});
            out.push_back(DeferredWork{TriggeredAtomic{slot, 1}, *r.write_completion, epoch,
                                       std::nullopt, "send completion atomic"});
            break;
        case RequestKind::rsend:
            out.push_back(DeferredWork{RemoteWrite{p.buffer.offset, p.buffer.len, r.data_dest},
                                       q.shared_, shared_threshold, r.write_completion,
                                       "rsend data write"});
            out.push_back(DeferredWork{TriggeredAtomic{slot, 1}, *r.write_completion, epoch,
                                       std::nullopt, "rsend completion atomic"});
            break;
        case RequestKind::recv:
            out.push_back(DeferredWork{TriggeredAtomic{slot, 1}, *r.trigger, epoch, std::nullopt,
                                       "recv completion atomic"});
            if (r.peer_cts)
            {
                out.push_back(DeferredWork{TriggeredAtomic{*r.peer_cts, 1}, q.shared_,
                                           shared_threshold, std::nullopt, "recv cts atomic"});
            }
            break;
    }
    if (out.size() > max_entries_per_op)
    {
        throw std::logic_error("request uses more than two DWQ entries per start");
    }
    return out;
}

Task<> StRuntime::enqueue_start(StQueue* queue, Request* request)
{
    co_await enqueue_start_all(queue, std::vector<Request*>{request});
}

Task<> StRuntime::enqueue_start_all(StQueue* queue, std::vector<Request*> requests)
{
    StQueue&                        q = live(queue);
    std::vector<PersistentRequest*> ps;
    std::set<const Request*>        seen;
    for (Request* r : requests)
    {
        PersistentRequest* p = persistent_arg(r);
        if (!p->paired)
        {
            throw Error(Errc::not_matched, "request " + std::to_string(p->id()) +
                                               " must be matched before it is enqueued");
        }
        if (p->rank() != q.rank())
        {
            throw Error(Errc::invalid_argument, "request and queue belong to different ranks");
        }
        StResources& rs = res(*p);
        if (rs.waits_enqueued < p->epoch || !seen.insert(p).second)
        {
            throw Error(Errc::already_started, "request " + std::to_string(p->id()) +
                                                   " started again without a wait");
        }
        if (p->queue >= 0 && p->queue != q.id_)
        {
            throw Error(Errc::wrong_queue, "request " + std::to_string(p->id()) +
                                               " is still outstanding on another queue");
        }
        ps.push_back(p);
    }

    bool any_shared = std::any_of(ps.begin(), ps.end(), [](const PersistentRequest* p) {
        return p->kind != RequestKind::send;
    });
    std::uint64_t shared_threshold = 0;
    if (any_shared)
    {
        shared_threshold = ++q.shared_bumps_;
    }

    std::vector<std::vector<DeferredWork>> plans;
    std::vector<PersistentRequest*>        shared_members;
    for (PersistentRequest* p : ps)
    {
        ++p->epoch;
        p->queue = q.id_;
        p->state = RequestState::started;
        q.outstanding_.emplace(p->id(), p);
        ++stats_.starts;
        plans.push_back(plan(*p, q, shared_threshold));
        stats_.max_entries_per_op =
            std::max<std::uint64_t>(stats_.max_entries_per_op, plans.back().size());
        if (p->kind != RequestKind::send)
        {
            shared_members.push_back(p);
        }
    }

    bool shared_enqueued = false;
    for (std::size_t i = 0; i < ps.size(); ++i)
    {
        PersistentRequest* p     = ps[i];
        std::uint64_t      epoch = p->epoch;
        for (auto& work : plans[i])
        {
            co_await fabric_.post_deferred(q.rank(), std::move(work));
            ++stats_.entries_armed;
        }

        if (p->kind == RequestKind::send)
        {
            WriteValueOp op{*res(*p).trigger, 1, {}};
            op.effect = [this, p, epoch] {
                if (observer_.start_executed)
                {
                    observer_.start_executed(*p, epoch);
                }
            };
            gpu_.enqueue(q.stream_, std::move(op));
            ++stats_.write_values;
        }
        else if (!shared_enqueued)
        {
            shared_enqueued = true;
            std::vector<std::pair<PersistentRequest*, std::uint64_t>> members;
            for (PersistentRequest* m : shared_members)
            {
                members.emplace_back(m, m->epoch);
            }
            WriteValueOp op{q.shared_, 1, {}};
            op.effect = [this, members = std::move(members)] {
                if (observer_.start_executed)
                {
                    for (const auto& [m, e] : members)
                    {
                        observer_.start_executed(*m, e);
                    }
                }
            };
            gpu_.enqueue(q.stream_, std::move(op));
            ++stats_.write_values;
        }
    }
}

void StRuntime::enqueue_wait(StQueue* queue, Request* request)
{
    enqueue_wait_all(queue, std::vector<Request*>{request});
}

void StRuntime::enqueue_wait_all(StQueue* queue)
{
    StQueue&              q = live(queue);
    std::vector<Request*> pending;
    for (const auto& [id, p] : q.outstanding_)
    {
        if (res(*p).waits_enqueued < p->epoch)
        {
            pending.push_back(p);
        }
    }
    enqueue_wait_all(queue, pending);
}

void StRuntime::enqueue_wait_all(StQueue* queue, const std::vector<Request*>& requests)
{
    StQueue&                        q = live(queue);
    std::vector<PersistentRequest*> ps;
    std::set<const Request*>        seen;
    for (Request* r : requests)
    {
        PersistentRequest* p = persistent_arg(r);
        if (p->queue < 0 || !p->resources)
        {
            throw Error(Errc::not_started, "request " + std::to_string(p->id()) +
                                               " was never started on a queue");
        }
        if (p->queue != q.id_)
        {
            throw Error(Errc::wrong_queue, "request " + std::to_string(p->id()) +
                                               " was started on queue " +
                                               std::to_string(p->queue));
        }
        if (res(*p).waits_enqueued >= p->epoch || !seen.insert(p).second)
        {
            throw Error(Errc::not_started, "request " + std::to_string(p->id()) +
                                               " has no start awaiting a wait");
        }
        ps.push_back(p);
    }

    if (ps.empty())
    {
        return;
    }
    // One stream op covers the whole list.
    PollValueOp                                               op;
    std::vector<std::pair<PersistentRequest*, std::uint64_t>> members;
    for (PersistentRequest* p : ps)
    {
        StResources&  rs     = res(*p);
        std::uint64_t target = ++rs.waits_enqueued;
        op.conditions.push_back(PollCondition{rs.completion_slot(), target});
        members.emplace_back(p, target);
    }
    op.effect = [this, members = std::move(members), qp = &q] {
        for (auto [p, target] : members)
        {
            StResources& r = res(*p);
            ++r.waits_done;
            if (observer_.wait_completed)
            {
                observer_.wait_completed(*p, target);
            }
            if (r.waits_done == p->epoch)
            {
                p->state = RequestState::matched;
                p->queue = -1;
                qp->outstanding_.erase(p->id());
            }
        }
    };
    gpu_.enqueue(q.stream_, std::move(op));
    ++stats_.polls;
}

Task<> StRuntime::queue_wait(StQueue* queue)
{
    StQueue&    q    = live(queue);
    std::string what = "queue_wait on queue " + std::to_string(q.id_) + " (rank " +
                       std::to_string(q.rank()) + ")";
    co_await mpi_.sim().wait_until(gpu_.progress(q.stream_), std::move(what), [this, &q] {
        return gpu_.idle(q.stream_) && q.outstanding_.empty();
    });
    co_await mpi_.sim().sleep(fabric_.cost().gpu_barrier_ns);
}

}  // namespace stsim
