#ifndef STSIM_STQUEUE_HPP
#define STSIM_STQUEUE_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <map>
#include <vector>

#include "stsim/gpusim.hpp"
#include "stsim/mpicore.hpp"
#include "stsim/nicsim.hpp"

namespace stsim
{

enum class QueueKind : int
{
    cxi = 0,
};

/// NIC resources a matched persistent request carries. Filled at match time,
/// released when the request is freed.
struct StResources
{
    RequestKind kind = RequestKind::send;

    /// Regular send: own triggering counter (GPU and CTS both bump it).
    /// Receive: the data region's remote-write counter.
    /// Ready send: unset; the queue's shared counter is used.
    std::optional<CounterId> trigger;
    /// Sends: local completion counter of the data write.
    std::optional<CounterId> write_completion;
    MemoryRegion             slot_region;

    std::optional<MemoryRegion> cts_region;   // regular send
    RemoteAddress               data_dest;    // sends
    std::optional<MemoryRegion> data_region;  // receive
    std::optional<RemoteAddress> peer_cts;    // receive paired with a regular send

    std::uint64_t waits_enqueued = 0;
    std::uint64_t waits_done     = 0;

    std::size_t completion_slot() const
    {
        return slot_region.base;
    }
};

class StRuntime;

class StQueue
{
public:
    int id() const
    {
        return id_;
    }
    int rank() const
    {
        return stream_.rank;
    }
    StreamId stream() const
    {
        return stream_;
    }
    CounterId shared_counter() const
    {
        return shared_;
    }
    std::size_t outstanding() const
    {
        return outstanding_.size();
    }

private:
    friend class StRuntime;

    int                          id_ = -1;
    QueueKind                    kind_ = QueueKind::cxi;
    StreamId                     stream_;
    CounterId                    shared_;
    std::uint64_t                shared_bumps_ = 0;
    /// Keyed by request id so iteration order is reproducible.
    std::map<std::uint64_t, PersistentRequest*> outstanding_;
    bool                         freed_ = false;
};

struct StObserver
{
    /// The stream op that starts `request` for `epoch` has executed.
    std::function<void(const PersistentRequest&, std::uint64_t epoch)> start_executed;
    /// The poll for `request` at `epoch` has completed.
    std::function<void(const PersistentRequest&, std::uint64_t epoch)> wait_completed;
};

struct StStats
{
    std::uint64_t starts              = 0;
    std::uint64_t entries_armed       = 0;
    std::uint64_t max_entries_per_op  = 0;
    std::uint64_t write_values        = 0;
    std::uint64_t polls               = 0;
};

/// Stream-triggered queues over the simulated NIC and GPU.
class StRuntime : public MatchHooks
{
public:
    /// Most DWQ entries one start of one request may consume.
    static constexpr std::uint64_t max_entries_per_op = 2;

    StRuntime(Mpi& mpi, Gpu& gpu);
    ~StRuntime() override;

    StRuntime(const StRuntime&)            = delete;
    StRuntime& operator=(const StRuntime&) = delete;

    StQueue* queue_init(QueueKind kind, StreamId stream);
    void     queue_free(StQueue* queue);

    /// All-or-nothing: every request is validated before anything is armed.
    /// May suspend while the DWQ pool is full.
    Task<> enqueue_start_all(StQueue* queue, std::vector<Request*> requests);
    Task<> enqueue_start(StQueue* queue, Request* request);

    void enqueue_wait_all(StQueue* queue, const std::vector<Request*>& requests);
    /// Waits on every request of the queue that has no wait enqueued yet.
    void enqueue_wait_all(StQueue* queue);
    void enqueue_wait(StQueue* queue, Request* request);

    /// Resumes once the stream has drained and nothing is outstanding.
    Task<> queue_wait(StQueue* queue);

    const StResources* resources(const PersistentRequest* request) const;

    void set_observer(StObserver observer)
    {
        observer_ = std::move(observer);
    }
    const StStats& stats() const
    {
        return stats_;
    }

    // MatchHooks
    void prepare(PersistentRequest& request, MatchOffer& offer) override;
    void bind(PersistentRequest& request, const MatchOffer& peer) override;
    void release(PersistentRequest& request) override;

private:
    StQueue&           live(StQueue* queue) const;
    PersistentRequest* persistent_arg(Request* r) const;
    StResources&       res(PersistentRequest& request) const;
    std::vector<DeferredWork> plan(PersistentRequest& p, StQueue& q, std::uint64_t shared_threshold);

    Mpi&                                  mpi_;
    Gpu&                                  gpu_;
    Fabric&                               fabric_;
    std::vector<std::unique_ptr<StQueue>> queues_;
    StObserver                            observer_;
    StStats                               stats_;
};

}  // namespace stsim

#endif
