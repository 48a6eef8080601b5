#include "stsim/safety.hpp"

#include <algorithm>
#include <memory>
#include <random>
#include <sstream>

namespace stsim
{

std::string ScheduleReport::summary() const
{
    std::ostringstream out;
    out << "seed=" << seed << " ranks=" << ranks << " pairs=" << pairs << " messages=" << messages
        << " completed=" << (completed ? 1 : 0) << " bad_payloads=" << bad_payloads
        << " early_send=" << counts.early_send_writes
        << " early_recv=" << counts.early_receive_writes
        << " duplicate_fires=" << counts.duplicate_fires
        << " missing_fires=" << counts.missing_fires
        << " counter_regressions=" << counts.counter_regressions;
    return out.str();
}

namespace
{

using Rng = std::mt19937_64;

std::uint64_t pick(Rng& rng, std::uint64_t lo, std::uint64_t hi)
{
    return lo + rng() % (hi - lo + 1);
}

std::byte payload_byte(int pair, bool reply, std::uint64_t iteration, std::size_t j)
{
    return static_cast<std::byte>((pair * 131 + (reply ? 71 : 0) + iteration * 17 + j) & 0xff);
}

/// One ping-pong channel: the initiator sends, the responder echoes back a
/// transformed payload. Each side runs on its own stream and queue.
struct Pair
{
    int                        id;
    int                        initiator;
    int                        responder;
    std::size_t                len;
    std::uint64_t              iterations;
    bool                       forward_ready;
    bool                       reply_ready;
    int                        tag;
    std::vector<SimTime>       initiator_delay;
    std::vector<SimTime>       responder_delay;
    std::vector<SimTime>       kernel;
};

struct Run
{
    World&                         w;
    ProtocolMonitor&               monitor;
    std::uint64_t                  bad = 0;
};

bool check(RankMemory& m, const BufferRef& b, int pair, bool reply, std::uint64_t i)
{
    auto bytes = m.bytes(b);
    for (std::size_t j = 0; j < bytes.size(); ++j)
    {
        if (bytes[j] != payload_byte(pair, reply, i, j))
        {
            return false;
        }
    }
    return true;
}

void fill(RankMemory& m, const BufferRef& b, int pair, bool reply, std::uint64_t i)
{
    auto bytes = m.bytes(b);
    for (std::size_t j = 0; j < bytes.size(); ++j)
    {
        bytes[j] = payload_byte(pair, reply, i, j);
    }
}

Task<> initiator(Run& run, const Pair& p)
{
    World&             w    = run.w;
    int                rank = p.initiator;
    Communicator       comm = w.mpi.world();
    StreamId           st   = w.gpu.create_stream(rank);
    StQueue*           q    = w.st.queue_init(QueueKind::cxi, st);
    BufferRef          out  = w.fabric.memory(rank).allocate(p.len);
    BufferRef          in   = w.fabric.memory(rank).allocate(p.len);
    PersistentRequest* send = w.mpi.send_init(rank, out, p.responder, p.tag, comm, p.forward_ready);
    PersistentRequest* recv = w.mpi.recv_init(rank, in, p.responder, p.tag, comm);
    std::vector<Request*> both{recv, send};
    co_await w.mpi.match_all(both);
    run.monitor.track(send);
    run.monitor.track(recv);

    for (std::uint64_t i = 0; i < p.iterations; ++i)
    {
        co_await w.sim.sleep(p.initiator_delay[i]);
        ComputeOp pack;
        pack.duration = p.kernel[i];
        pack.label    = "pack";
        pack.effect   = [&w, rank, out, id = p.id, i] { fill(w.fabric.memory(rank), out, id, false, i); };
        w.gpu.enqueue(st, std::move(pack));
        co_await w.st.enqueue_start_all(q, both);
        w.st.enqueue_wait(q, send);
        w.st.enqueue_wait(q, recv);
        ComputeOp verify;
        verify.label  = "verify";
        verify.effect = [&run, &w, rank, in, id = p.id, i] {
            if (!check(w.fabric.memory(rank), in, id, true, i))
            {
                ++run.bad;
            }
        };
        w.gpu.enqueue(st, std::move(verify));
    }
    co_await w.st.queue_wait(q);
}

Task<> responder(Run& run, const Pair& p)
{
    World&             w    = run.w;
    int                rank = p.responder;
    Communicator       comm = w.mpi.world();
    StreamId           st   = w.gpu.create_stream(rank);
    StQueue*           q    = w.st.queue_init(QueueKind::cxi, st);
    BufferRef          in   = w.fabric.memory(rank).allocate(p.len);
    BufferRef          out  = w.fabric.memory(rank).allocate(p.len);
    PersistentRequest* recv = w.mpi.recv_init(rank, in, p.initiator, p.tag, comm);
    PersistentRequest* send = w.mpi.send_init(rank, out, p.initiator, p.tag, comm, p.reply_ready);
    std::vector<Request*> both{recv, send};
    std::vector<Request*> only_recv{recv};
    std::vector<Request*> only_send{send};
    co_await w.mpi.match_all(both);
    run.monitor.track(send);
    run.monitor.track(recv);

    for (std::uint64_t i = 0; i < p.iterations; ++i)
    {
        co_await w.sim.sleep(p.responder_delay[i]);
        if (i == 0)
        {
            co_await w.st.enqueue_start_all(q, only_recv);
        }
        w.st.enqueue_wait(q, recv);
        ComputeOp echo;
        echo.duration = p.kernel[i];
        echo.label    = "echo";
        echo.effect   = [&run, &w, rank, in, out, id = p.id, i] {
            RankMemory& m = w.fabric.memory(rank);
            if (!check(m, in, id, false, i))
            {
                ++run.bad;
            }
            fill(m, out, id, true, i);
        };
        w.gpu.enqueue(st, std::move(echo));
        co_await w.st.enqueue_start_all(q, i + 1 < p.iterations ? both : only_send);
        w.st.enqueue_wait(q, send);
    }
    co_await w.st.queue_wait(q);
}

}  // namespace

ScheduleReport run_random_schedule(std::uint64_t seed, const ScheduleOptions& options)
{
    Rng            rng(seed);
    ScheduleReport report;
    report.seed  = seed;
    report.ranks = static_cast<int>(pick(rng, 2, 4));
    report.pairs = static_cast<int>(pick(rng, 1, 4));

    CostModel cost;
    cost.kernel_launch_ns       = pick(rng, 0, 3000);
    cost.gpu_barrier_ns         = pick(rng, 0, 2000);
    cost.wire_latency_ns        = pick(rng, 0, 5000);
    cost.atomic_ns              = pick(rng, 0, 2000);
    cost.bandwidth_bytes_per_ns = pick(rng, 1, 50);
    cost.stream_op_gap_ns       = pick(rng, 0, 300);
    cost.poll_overhead_ns       = pick(rng, 0, 200);
    cost.gpu_copy_bytes_per_ns  = pick(rng, 1, 200);
    bool small_pool = rng() % 4 == 0;

    std::vector<Pair> pairs;
    for (int id = 0; id < report.pairs; ++id)
    {
        Pair p;
        p.id        = id;
        p.initiator = static_cast<int>(pick(rng, 0, static_cast<std::uint64_t>(report.ranks - 1)));
        p.responder = static_cast<int>(pick(rng, 0, static_cast<std::uint64_t>(report.ranks - 2)));
        if (p.responder >= p.initiator)
        {
            ++p.responder;
        }
        p.len           = static_cast<std::size_t>(rng() % 3 == 0 ? pick(rng, 0, 64) : pick(rng, 1, 20000));
        p.iterations    = pick(rng, 1, 4);
        p.forward_ready = options.unsafe_forward_ready && rng() % 2 == 0;
        p.reply_ready   = rng() % 2 == 0;
        // Distinct tags keep pairs between the same two ranks apart.
        p.tag = id;
        for (std::uint64_t i = 0; i < p.iterations; ++i)
        {
            p.initiator_delay.push_back(rng() % 2 == 0 ? 0 : pick(rng, 0, 20000));
            p.responder_delay.push_back(rng() % 2 == 0 ? 0 : pick(rng, 0, 20000));
            p.kernel.push_back(pick(rng, 0, 3000));
        }
        report.messages += 2 * p.iterations;
        pairs.push_back(std::move(p));
    }

    // A small pool now and then forces hosts to block on deferred work. One
    // start of a send and a receive arms up to four entries, so the pool
    // holds at least four. It is only shrunk when every rank runs a single
    // program: programs sharing a small pool can starve each other's first
    // start while running ahead, which is a genuine resource deadlock rather
    // than a protocol fault.
    std::vector<std::uint64_t> roles(static_cast<std::size_t>(report.ranks), 0);
    for (const Pair& p : pairs)
    {
        ++roles[static_cast<std::size_t>(p.initiator)];
        ++roles[static_cast<std::size_t>(p.responder)];
    }
    std::uint64_t busiest  = *std::max_element(roles.begin(), roles.end());
    cost.dwq_pool_capacity = small_pool && busiest == 1 ? pick(rng, 4, 8) : 500;

    World           w(report.ranks, cost);
    ProtocolMonitor monitor(w);
    Run             run{w, monitor};
    for (const Pair& p : pairs)
    {
        w.sim.spawn(p.initiator, [&run, &p]() { return initiator(run, p); });
        w.sim.spawn(p.responder, [&run, &p]() { return responder(run, p); });
    }
    RunOutcome out   = w.sim.run_until_quiescent();
    report.completed = out.completed();
    if (!report.completed)
    {
        report.notes.push_back(out.report());
    }
    else
    {
        monitor.finish();
    }
    report.bad_payloads = run.bad;
    report.counts       = monitor.counts();
    for (const auto& m : monitor.messages())
    {
        report.notes.push_back(m);
    }
    return report;
}

}  // namespace stsim
