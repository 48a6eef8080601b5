#include "stsim/bench.hpp"

#include <algorithm>
#include <cstring>
#include <map>
#include <ostream>
#include <random>
#include <stdexcept>

#include "stsim/error.hpp"
#include "stsim/monitor.hpp"

namespace stsim
{

const char* backend_name(Backend backend)
{
    switch (backend)
    {
    case Backend::baseline:
        return "baseline";
    case Backend::st_send:
        return "st-send";
    case Backend::st_rsend:
        return "st-rsend";
    }
    return "?";
}

Backend parse_backend(std::string_view name)
{
    for (Backend b : {Backend::baseline, Backend::st_send, Backend::st_rsend})
    {
        if (name == backend_name(b))
        {
            return b;
        }
    }
    throw std::invalid_argument("unknown backend '" + std::string(name) + "'");
}

double BenchResult::metric(std::string_view name) const
{
    for (const auto& [key, value] : metrics)
    {
        if (key == name)
        {
            return value;
        }
    }
    throw std::out_of_range("no metric '" + std::string(name) + "'");
}

namespace
{

std::string format_number(double v)
{
    char buf[64];
    if (v == static_cast<double>(static_cast<long long>(v)))
    {
        std::snprintf(buf, sizeof buf, "%lld", static_cast<long long>(v));
    }
    else
    {
        std::snprintf(buf, sizeof buf, "%.6f", v);
    }
    return buf;
}

void trace_run(std::ostream* trace, const World& w, const std::string& title)
{
    if (trace != nullptr)
    {
        *trace << "# " << title << '\n';
        w.sim.write_trace(*trace);
    }
}

}  // namespace

void write_csv(std::ostream& out, const std::vector<BenchResult>& results)
{
    out << "backend,size_bytes,ranks,iterations,mean_ns,metric,value\n";
    for (const BenchResult& r : results)
    {
        for (const auto& [name, value] : r.metrics)
        {
            out << r.backend << ',' << r.size_bytes << ',' << r.ranks << ',' << r.iterations << ','
                << format_number(r.mean_ns) << ',' << name << ',' << format_number(value) << '\n';
        }
    }
}

// -- ping-pong ---------------------------------------------------------------

std::uint64_t default_iterations(std::uint64_t size)
{
    constexpr std::uint64_t mib = 1024 * 1024;
    if (size < 4 * mib)
    {
        return 1000;
    }
    if (size <= 64 * mib)
    {
        return 100;
    }
    return 10;
}

SimTime pingpong_hop_ns(Backend backend, const CostModel& cost, std::uint64_t size)
{
    SimTime copies = 2 * cost.copy_time(size);
    SimTime wire   = cost.transfer_time(size);
    if (backend == Backend::baseline)
    {
        // Unpack and pack launch back to back, so only one launch is exposed.
        SimTime hop = cost.kernel_launch_ns + copies + cost.stream_op_gap_ns +
                      cost.gpu_barrier_ns + wire;
        if (size >= cost.eager_threshold_bytes)
        {
            hop += cost.match_setup_ns;
        }
        return hop;
    }
    // Completion poll, unpack, pack, then one doorbell per trigger counter.
    SimTime ops = backend == Backend::st_send ? 4 : 3;
    return wire + cost.atomic_ns + cost.poll_overhead_ns + copies + ops * cost.stream_op_gap_ns;
}

namespace
{

struct PingPongBuffers
{
    BufferRef send;
    BufferRef recv;
    BufferRef work;
};

std::byte fill_byte(std::uint64_t iteration)
{
    return static_cast<std::byte>((iteration * 37 + 11) & 0xff);
}

void write_pattern(std::span<std::byte> b, std::uint64_t iteration)
{
    std::fill(b.begin(), b.end(), fill_byte(iteration));
    if (b.size() >= 8)
    {
        std::memcpy(b.data(), &iteration, 8);
    }
}

bool check_pattern(std::span<const std::byte> b, std::uint64_t iteration)
{
    std::size_t from = 0;
    if (b.size() >= 8)
    {
        std::uint64_t stamp = 0;
        std::memcpy(&stamp, b.data(), 8);
        if (stamp != iteration)
        {
            return false;
        }
        from = 8;
    }
    std::byte f = fill_byte(iteration);
    return std::all_of(b.begin() + static_cast<std::ptrdiff_t>(from), b.end(),
                       [f](std::byte x) { return x == f; });
}

struct PingPongState
{
    World&                       w;
    std::uint64_t                size;
    std::uint64_t                iterations;
    std::vector<PingPongBuffers> buf;
    std::vector<StreamId>        stream;
    std::uint64_t                bad     = 0;
    SimTime                      finish  = 0;

    PingPongState(World& world, std::uint64_t sz, std::uint64_t n)
        : w(world), size(sz), iterations(n)
    {
        for (int r = 0; r < 2; ++r)
        {
            RankMemory& m = w.fabric.memory(r);
            PingPongBuffers b;
            b.send = m.allocate(sz);
            b.recv = m.allocate(sz);
            b.work = m.allocate(sz);
            buf.push_back(b);
            stream.push_back(w.gpu.create_stream(r));
        }
    }

    /// Rank 0 fills the send buffer with a fresh pattern; rank 1 echoes what
    /// it last received.
    ComputeOp pack(int rank, std::uint64_t i)
    {
        ComputeOp op;
        op.duration = w.cost.copy_time(size);
        op.label    = "pack";
        op.effect   = [this, rank, i] {
            RankMemory& m = w.fabric.memory(rank);
            if (rank == 0)
            {
                write_pattern(m.bytes(buf[0].send), i);
            }
            else
            {
                auto from = m.bytes(buf[1].work);
                std::copy(from.begin(), from.end(), m.bytes(buf[1].send).begin());
            }
        };
        return op;
    }

    ComputeOp unpack(int rank, std::uint64_t i)
    {
        ComputeOp op;
        op.duration = w.cost.copy_time(size);
        op.label    = "unpack";
        op.effect   = [this, rank, i] {
            RankMemory& m    = w.fabric.memory(rank);
            auto        data = m.bytes(buf[static_cast<std::size_t>(rank)].recv);
            if (!check_pattern(data, i))
            {
                ++bad;
            }
            std::copy(data.begin(), data.end(),
                      m.bytes(buf[static_cast<std::size_t>(rank)].work).begin());
        };
        return op;
    }

    void done()
    {
        finish = std::max(finish, w.sim.now());
    }
};

Task<> baseline_pingpong(PingPongState& s, int rank)
{
    World&       w    = s.w;
    Communicator comm = w.mpi.world();
    int          peer = 1 - rank;
    StreamId     st   = s.stream[static_cast<std::size_t>(rank)];
    BufferRef    send = s.buf[static_cast<std::size_t>(rank)].send;
    BufferRef    recv = s.buf[static_cast<std::size_t>(rank)].recv;
    for (std::uint64_t i = 0; i < s.iterations; ++i)
    {
        if (rank == 1)
        {
            co_await w.mpi.recv(rank, recv, peer, 0, comm);
            w.gpu.enqueue(st, s.unpack(rank, i));
        }
        w.gpu.enqueue(st, s.pack(rank, i));
        co_await w.gpu.synchronize(st);
        co_await w.mpi.send(rank, send, peer, 0, comm);
        if (rank == 0)
        {
            co_await w.mpi.recv(rank, recv, peer, 0, comm);
            w.gpu.enqueue(st, s.unpack(rank, i));
        }
    }
    co_await w.gpu.synchronize(st);
    s.done();
}

Task<> st_pingpong(PingPongState& s, int rank, bool ready)
{
    World&             w    = s.w;
    Communicator       comm = w.mpi.world();
    int                peer = 1 - rank;
    StreamId           st   = s.stream[static_cast<std::size_t>(rank)];
    StQueue*           q    = w.st.queue_init(QueueKind::cxi, st);
    PersistentRequest* send =
        w.mpi.send_init(rank, s.buf[static_cast<std::size_t>(rank)].send, peer, 0, comm, ready);
    PersistentRequest* recv =
        w.mpi.recv_init(rank, s.buf[static_cast<std::size_t>(rank)].recv, peer, 0, comm);
    std::vector<Request*> both{recv, send};
    std::vector<Request*> only_send{send};
    std::vector<Request*> only_recv{recv};
    co_await w.mpi.match_all(both);

    // Everything is enqueued up front; the host only waits at the end.
    if (rank == 1)
    {
        co_await w.st.enqueue_start_all(q, only_recv);
    }
    for (std::uint64_t i = 0; i < s.iterations; ++i)
    {
        if (rank == 0)
        {
            w.gpu.enqueue(st, s.pack(rank, i));
            co_await w.st.enqueue_start_all(q, both);
            w.st.enqueue_wait(q, send);
            w.st.enqueue_wait(q, recv);
            w.gpu.enqueue(st, s.unpack(rank, i));
        }
        else
        {
            w.st.enqueue_wait(q, recv);
            w.gpu.enqueue(st, s.unpack(rank, i));
            w.gpu.enqueue(st, s.pack(rank, i));
            co_await w.st.enqueue_start_all(q, i + 1 < s.iterations ? both : only_send);
            w.st.enqueue_wait(q, send);
        }
    }
    co_await w.st.queue_wait(q);
    w.mpi.request_free(send);
    w.mpi.request_free(recv);
    w.st.queue_free(q);
    s.done();
}

}  // namespace

PingPongRun run_pingpong(Backend backend, std::uint64_t size, std::uint64_t iterations,
                         const CostModel& cost, std::ostream* trace)
{
    if (iterations == 0)
    {
        throw std::invalid_argument("ping-pong needs at least one iteration");
    }
    World w(2, cost);
    w.sim.enable_trace(trace != nullptr);
    PingPongState s(w, size, iterations);
    for (int rank = 0; rank < 2; ++rank)
    {
        if (backend == Backend::baseline)
        {
            w.sim.spawn(rank, [&s, rank]() { return baseline_pingpong(s, rank); });
        }
        else
        {
            bool ready = backend == Backend::st_rsend;
            w.sim.spawn(rank, [&s, rank, ready]() { return st_pingpong(s, rank, ready); });
        }
    }
    RunOutcome out = w.sim.run_until_quiescent();
    if (!out.completed())
    {
        throw std::runtime_error("ping-pong did not complete:\n" + out.report());
    }
    if (s.bad != 0)
    {
        throw std::runtime_error("ping-pong payload corrupted in " + std::to_string(s.bad) +
                                 " of " + std::to_string(2 * iterations) + " deliveries");
    }
    trace_run(trace, w,
              std::string("pingpong ") + backend_name(backend) + " " + std::to_string(size));

    PingPongRun run;
    run.total_ns          = s.finish;
    double round_trip     = static_cast<double>(s.finish) / static_cast<double>(iterations);
    double latency        = round_trip / 2;
    run.result.backend    = backend_name(backend);
    run.result.size_bytes = size;
    run.result.ranks      = 2;
    run.result.iterations = iterations;
    run.result.mean_ns    = round_trip;
    run.result.metrics    = {{"latency_ns", latency},
                             {"bandwidth_bytes_per_ns", static_cast<double>(size) / latency}};
    return run;
}

std::vector<BenchResult> run_pingpong(Backend backend, const std::vector<std::uint64_t>& sizes,
                                      const CostModel& cost, std::uint64_t iterations)
{
    std::vector<BenchResult> out;
    for (std::uint64_t size : sizes)
    {
        std::uint64_t n = iterations != 0 ? iterations : default_iterations(size);
        out.push_back(run_pingpong(backend, size, n, cost).result);
    }
    return out;
}

}  // namespace stsim
