#ifndef STSIM_GPUSIM_HPP
#define STSIM_GPUSIM_HPP

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "stsim/cost_model.hpp"
#include "stsim/nicsim.hpp"
#include "stsim/simclock.hpp"
#include "stsim/task.hpp"

namespace stsim
{

struct StreamId
{
    int rank  = -1;
    int index = -1;

    bool operator==(const StreamId&) const = default;
};

/// A kernel. `effect` runs when the body finishes.
struct ComputeOp
{
    SimTime               duration = 0;
    std::function<void()> effect;
    std::string           label;
};

/// hipStreamWriteValue64-style doorbell: bumps a NIC counter, then runs `effect`.
struct WriteValueOp
{
    CounterId             counter;
    std::uint64_t         amount = 1;
    std::function<void()> effect;
};

struct PollCondition
{
    std::size_t   slot   = 0;
    std::uint64_t target = 0;
};

/// Blocks the stream until every listed 8-byte slot in the rank's memory
/// reaches its target.
struct PollValueOp
{
    std::vector<PollCondition> conditions;
    /// Runs when the poll completes.
    std::function<void()>      effect;
};

struct BarrierOp
{
};

using StreamOp = std::variant<ComputeOp, WriteValueOp, PollValueOp, BarrierOp>;

const char* op_kind(const StreamOp& op);

struct GpuObserver
{
    /// `finished` is false at op start and true at op finish.
    std::function<void(StreamId, std::uint64_t seq, const StreamOp&, bool finished)> op_event;
};

class Gpu
{
public:
    Gpu(Simulator& sim, Fabric& fabric);
    ~Gpu();

    Gpu(const Gpu&)            = delete;
    Gpu& operator=(const Gpu&) = delete;

    StreamId create_stream(int rank);

    /// Appends an op to the stream FIFO; returns its per-stream sequence number.
    std::uint64_t enqueue(StreamId stream, StreamOp op);

    /// Host side: resumes once the FIFO is empty, then charges the barrier.
    Task<> synchronize(StreamId stream);

    bool          idle(StreamId stream) const;
    std::uint64_t enqueued(StreamId stream) const;
    std::uint64_t completed(StreamId stream) const;
    Condition&    progress(StreamId stream);

    void set_observer(GpuObserver observer)
    {
        observer_ = std::move(observer);
    }

private:
    struct Pending
    {
        std::uint64_t seq;
        SimTime       enqueued_at;
        StreamOp      op;
    };

    struct Stream
    {
        StreamId            id;
        std::deque<Pending> fifo;
        bool                busy        = false;
        bool                has_run     = false;
        SimTime             last_finish = 0;
        std::uint64_t       next_seq    = 0;
        std::uint64_t       done        = 0;
        /// Set while the head poll has started and is waiting on memory.
        bool                polling     = false;
        Condition           progress;
    };

    Stream&       stream(StreamId id);
    const Stream& stream(StreamId id) const;
    ComponentId   component(const Stream& s) const;

    void maybe_start(Stream& s);
    void start_head(Stream& s);
    void finish_head(Stream& s);
    void report_pending(std::vector<std::string>& out) const;

    Simulator&                           sim_;
    Fabric&                              fabric_;
    std::vector<std::unique_ptr<Stream>> streams_;
    GpuObserver                          observer_;
};

}  // namespace stsim

#endif
