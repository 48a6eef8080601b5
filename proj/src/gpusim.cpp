#include "stsim/gpusim.hpp"

#include <algorithm>
#include <sstream>

#include "stsim/error.hpp"

namespace stsim
{

const char* op_kind(const StreamOp& op)
{
    switch (op.index())
    {
        case 0:
            return "compute";
        case 1:
            return "write_value";
        case 2:
            return "poll_value";
        default:
            return "barrier";
    }
}

Gpu::Gpu(Simulator& sim, Fabric& fabric) : sim_(sim), fabric_(fabric)
{
    sim_.add_pending_work_reporter([this](std::vector<std::string>& out) { report_pending(out); });
}

Gpu::~Gpu() = default;

StreamId Gpu::create_stream(int rank)
{
    if (rank < 0 || rank >= fabric_.size())
    {
        throw Error(Errc::invalid_rank, "no GPU on rank " + std::to_string(rank));
    }
    auto s = std::make_unique<Stream>();
    s->id  = StreamId{rank, static_cast<int>(streams_.size())};
    streams_.push_back(std::move(s));
    return streams_.back()->id;
}

Gpu::Stream& Gpu::stream(StreamId id)
{
    if (id.index < 0 || static_cast<std::size_t>(id.index) >= streams_.size() ||
        streams_[static_cast<std::size_t>(id.index)]->id.rank != id.rank)
    {
        throw Error(Errc::invalid_argument, "unknown stream");
    }
    return *streams_[static_cast<std::size_t>(id.index)];
}

const Gpu::Stream& Gpu::stream(StreamId id) const
{
    return const_cast<Gpu*>(this)->stream(id);
}

ComponentId Gpu::component(const Stream& s) const
{
    return ComponentId{Component::gpu, s.id.rank, s.id.index};
}

std::uint64_t Gpu::enqueue(StreamId id, StreamOp op)
{
    Stream& s = stream(id);
    if (auto* w = std::get_if<WriteValueOp>(&op))
    {
        if (w->counter.rank != id.rank)
        {
            throw Error(Errc::unknown_counter, "stream may only trigger counters on its own NIC");
        }
    }
    std::uint64_t seq = s.next_seq++;
    s.fifo.push_back(Pending{seq, sim_.now(), std::move(op)});
    maybe_start(s);
    return seq;
}

bool Gpu::idle(StreamId id) const
{
    const Stream& s = stream(id);
    return s.fifo.empty() && !s.busy;
}

std::uint64_t Gpu::enqueued(StreamId id) const
{
    return stream(id).next_seq;
}

std::uint64_t Gpu::completed(StreamId id) const
{
    return stream(id).done;
}

Condition& Gpu::progress(StreamId id)
{
    return stream(id).progress;
}

Task<> Gpu::synchronize(StreamId id)
{
    Stream& s = stream(id);
    if (!(s.fifo.empty() && !s.busy))
    {
        std::string what = "stream synchronize on " + component(s).to_string();
        co_await sim_.wait_until(s.progress, std::move(what),
                                 [&s] { return s.fifo.empty() && !s.busy; });
    }
    co_await sim_.sleep(fabric_.cost().gpu_barrier_ns);
}

void Gpu::maybe_start(Stream& s)
{
    if (s.busy || s.fifo.empty())
    {
        return;
    }
    const CostModel& cost  = fabric_.cost();
    SimTime          start = s.fifo.front().enqueued_at + cost.kernel_launch_ns;
    if (s.has_run)
    {
        start = std::max(start, s.last_finish + cost.stream_op_gap_ns);
    }
    start  = std::max(start, sim_.now());
    s.busy = true;
    sim_.schedule(start - sim_.now(), component(s), "stream_op_start",
                  [this, &s] { start_head(s); });
}

void Gpu::start_head(Stream& s)
{
    Pending& head = s.fifo.front();
    if (observer_.op_event)
    {
        observer_.op_event(s.id, head.seq, head.op, false);
    }
    const CostModel& cost = fabric_.cost();

    switch (head.op.index())
    {
        case 0:
            sim_.schedule(std::get<ComputeOp>(head.op).duration, component(s), "stream_op_finish",
                          [this, &s] { finish_head(s); });
            break;
        case 1:
        {
            auto w = std::get<WriteValueOp>(head.op);
            fabric_.increment_counter(w.counter, w.amount);
            finish_head(s);
            break;
        }
        case 2:
        {
            auto        p   = std::get<PollValueOp>(head.op);
            RankMemory& mem = fabric_.memory(s.id.rank);
            auto        met = [&mem, p] {
                return std::all_of(p.conditions.begin(), p.conditions.end(),
                                   [&mem](const PollCondition& c) { return mem.load_u64(c.slot) >= c.target; });
            };
            if (met())
            {
                sim_.schedule(cost.poll_overhead_ns, component(s), "stream_op_finish",
                              [this, &s] { finish_head(s); });
            }
            else
            {
                s.polling = true;
                sim_.watch(mem.changed(), met, [this, &s, &cost] {
                    s.polling = false;
                    sim_.schedule(cost.poll_overhead_ns, component(s), "stream_op_finish",
                                  [this, &s] { finish_head(s); });
                });
            }
            break;
        }
        default:
            sim_.schedule(cost.gpu_barrier_ns, component(s), "stream_op_finish",
                          [this, &s] { finish_head(s); });
            break;
    }
}

void Gpu::finish_head(Stream& s)
{
    Pending head = std::move(s.fifo.front());
    s.fifo.pop_front();
    std::visit(
        [](auto& op) {
            if constexpr (!std::is_same_v<std::decay_t<decltype(op)>, BarrierOp>)
            {
                if (op.effect)
                {
                    op.effect();
                }
            }
        },
        head.op);
    s.busy        = false;
    s.has_run     = true;
    s.last_finish = sim_.now();
    ++s.done;
    if (observer_.op_event)
    {
        observer_.op_event(s.id, head.seq, head.op, true);
    }
    sim_.notify(s.progress);
    maybe_start(s);
}

void Gpu::report_pending(std::vector<std::string>& out) const
{
    for (const auto& sp : streams_)
    {
        const Stream& s = *sp;
        if (s.fifo.empty())
        {
            continue;
        }
        std::ostringstream line;
        line << component(s).to_string() << " stalled with " << s.fifo.size() << " op(s); head "
             << op_kind(s.fifo.front().op);
        if (auto* p = std::get_if<PollValueOp>(&s.fifo.front().op))
        {
            for (const PollCondition& c : p->conditions)
            {
                line << " slot " << c.slot << " target " << c.target << " (value "
                     << fabric_.memory(s.id.rank).load_u64(c.slot) << ")";
            }
        }
        out.push_back(line.str());
    }
}

}  // namespace stsim
