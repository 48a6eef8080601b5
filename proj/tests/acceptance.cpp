// Prints one PASS/FAIL line per acceptance criterion; exits non-zero if any
// criterion fails. Artifacts (seed log, CSVs) are written to the working
// directory.

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "stsim/bench.hpp"
#include "stsim/error.hpp"
#include "stsim/safety.hpp"
#include "stsim/world.hpp"

using namespace stsim;

namespace
{

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start)
{
    return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Verdict
{
    bool        pass = true;
    std::string detail;

    void fail(const std::string& why)
    {
        if (pass)
        {
            detail.clear();
        }
        else
        {
            detail += "; ";
        }
        pass = false;
        detail += why;
    }
};

int failures = 0;

void report(int id, const std::string& name, const Verdict& v)
{
    std::cout << (v.pass ? "PASS" : "FAIL") << " [" << id << "] " << name << ": " << v.detail
              << std::endl;
    failures += v.pass ? 0 : 1;
}

// -- 1 ---------------------------------------------------------------------

Verdict protocol_safety()
{
    constexpr std::uint64_t schedules = 1000;
    Verdict                 v;
    auto                    start = Clock::now();
    std::ofstream           log("safety_schedules.log");
    std::uint64_t           messages = 0, dirty = 0;
    for (std::uint64_t seed = 1; seed <= schedules; ++seed)
    {
        ScheduleReport r = run_random_schedule(seed);
        log << r.summary() << '\n';
        messages += r.messages;
        if (!r.clean())
        {
            ++dirty;
            v.fail(r.summary());
        }
    }
    double elapsed = seconds_since(start);
    if (elapsed >= 60.0)
    {
        v.fail("took " + std::to_string(elapsed) + " s");
    }
    if (v.pass)
    {
        std::ostringstream d;
        d << schedules << " schedules (seeds 1.." << schedules << ", " << messages
          << " messages, log safety_schedules.log), 0 violations, " << elapsed << " s";
        v.detail = d.str();
    }
    return v;
}

// -- 2 ---------------------------------------------------------------------

Verdict oracle_equivalence()
{
    Verdict       v;
    auto          start  = Clock::now();
    Board         board  = glider_blinker(64);
    std::uint64_t oracle = board_digest(life_oracle(board, 100));
    int           equal  = 0;
    for (auto [rows, cols] : std::vector<std::pair<int, int>>{{1, 1}, {2, 2}, {4, 2}, {4, 4}})
    {
        for (Backend b : {Backend::baseline, Backend::st_send, Backend::st_rsend})
        {
            LifeConfig c;
            c.backend = b;
            c.rows    = rows;
            c.cols    = cols;
            c.steps   = 100;
            LifeRun run = run_game_of_life(board, c);
            if (run.digest == oracle)
            {
                ++equal;
            }
            else
            {
                v.fail(std::string(backend_name(b)) + " " + std::to_string(rows) + "x" +
                       std::to_string(cols) + " digest differs");
            }
        }
    }
    double elapsed = seconds_since(start);
    if (elapsed >= 30.0)
    {
        v.fail("took " + std::to_string(elapsed) + " s");
    }
    if (v.pass)
    {
        std::ostringstream d;
        d << equal << "/12 digests equal oracle " << std::hex << oracle << std::dec << ", "
          << elapsed << " s";
        v.detail = d.str();
    }
    return v;
}

// -- 3, 4 --------------------------------------------------------------------

double latency(Backend b, std::uint64_t size, std::uint64_t iterations,
               std::vector<BenchResult>& csv)
{
    BenchResult r = run_pingpong(b, size, iterations).result;
    csv.push_back(r);
    return r.metric("latency_ns");
}

Verdict latency_ordering(std::vector<BenchResult>& csv)
{
    Verdict v;
    double  lo = 1.0, hi = 0.0;
    for (std::uint64_t size = 32; size <= 512 * 1024; size *= 2)
    {
        std::uint64_t n     = default_iterations(size);
        double        base  = latency(Backend::baseline, size, n, csv);
        double        send  = latency(Backend::st_send, size, n, csv);
        double        ready = latency(Backend::st_rsend, size, n, csv);
        double        cut   = 1.0 - send / base;
        lo                  = std::min(lo, cut);
        hi                  = std::max(hi, cut);
        if (!(ready < send && send < base))
        {
            v.fail("ordering broken at " + std::to_string(size) + " B");
        }
        if (cut < 0.10 || cut > 0.60)
        {
            v.fail("st-send reduction " + std::to_string(cut) + " at " + std::to_string(size) + " B");
        }
    }
    if (v.pass)
    {
        std::ostringstream d;
        d << "32 B..512 KiB: st-rsend < st-send < baseline, st-send reduction " << 100 * lo
          << "%.." << 100 * hi << "%";
        v.detail = d.str();
    }
    return v;
}

Verdict large_message_convergence(std::vector<BenchResult>& csv)
{
    Verdict v;
    double  worst = 0.0;
    const std::vector<std::pair<std::uint64_t, std::uint64_t>> runs{
        {8u << 20, default_iterations(8u << 20)}, {16u << 20, 10}, {32u << 20, 10}};
    for (auto [size, n] : runs)
    {
        double base = latency(Backend::baseline, size, n, csv);
        for (Backend b : {Backend::st_send, Backend::st_rsend})
        {
            double gap = std::abs(latency(b, size, n, csv) - base) / base;
            worst      = std::max(worst, gap);
            if (gap > 0.10)
            {
                v.fail(std::string(backend_name(b)) + " differs by " + std::to_string(gap) +
                       " at " + std::to_string(size) + " B");
            }
        }
    }
    if (v.pass)
    {
        v.detail = "8/16/32 MiB: largest ST vs baseline gap " + std::to_string(100 * worst) + "%";
    }
    return v;
}

// -- 5, 8 --------------------------------------------------------------------

struct SweepArtifacts
{
    std::vector<SweepPoint> points;
    std::string             csv;
    std::string             trace;
};

SweepArtifacts full_sweep()
{
    SweepConfig        config;
    std::ostringstream trace, csv;
    SweepArtifacts     out;
    out.points = run_scaling_sweep(config, CostModel{}, &trace);
    write_csv(csv, sweep_results(config, out.points));
    out.csv   = csv.str();
    out.trace = trace.str();
    return out;
}

Verdict small_message_crossover(const SweepArtifacts& sweep)
{
    Verdict                                 v;
    const CostModel                         cost;
    std::map<std::pair<int, int>, SimTime> base, send, ready;
    std::map<std::pair<int, int>, std::size_t> edge;
    for (const SweepPoint& p : sweep.points)
    {
        auto key  = std::make_pair(p.rows, p.cols);
        edge[key] = p.max_message_bytes;
        (p.backend == Backend::baseline ? base : p.backend == Backend::st_send ? send : ready)[key] =
            p.solve_ns;
    }
    int checked = 0;
    for (const auto& [key, bytes] : edge)
    {
        if (key.first * key.second == 1 || bytes >= cost.eager_threshold_bytes)
        {
            continue;
        }
        ++checked;
        std::string at = std::to_string(key.first) + "x" + std::to_string(key.second);
        if (!(base[key] < send[key]))
        {
            v.fail("baseline does not beat st-send at " + at);
        }
        if (base[key] < ready[key])
        {
            v.fail("baseline beats st-rsend at " + at);
        }
    }
    if (checked == 0)
    {
        v.fail("no sweep point has messages below the eager threshold");
    }
    if (v.pass)
    {
        v.detail = std::to_string(checked) +
                   " sub-eager sweep points: baseline < st-send and st-rsend < baseline";
    }
    return v;
}

Verdict determinism(const SweepArtifacts& first)
{
    Verdict        v;
    SweepArtifacts second = full_sweep();
    if (first.trace != second.trace)
    {
        v.fail("trace dumps differ");
    }
    if (first.csv != second.csv)
    {
        v.fail("CSVs differ");
    }
    if (v.pass)
    {
        v.detail = "two full sweeps: traces (" + std::to_string(first.trace.size()) +
                   " bytes) and CSVs (" + std::to_string(first.csv.size()) +
                   " bytes) byte-identical";
    }
    return v;
}

// -- 6 ---------------------------------------------------------------------

/// 501 triggered writes on one NIC: the host stalls at post 501 and resumes
/// once one armed entry retires.
std::string five_hundred_and_one(Verdict& v)
{
    World       w(2);
    auto        src     = w.fabric.memory(0).allocate(8);
    auto        dst     = w.fabric.memory(1).allocate(8 * 501);
    auto        region  = w.fabric.register_region(1, dst.offset, dst.len, false);
    CounterId   trigger = w.fabric.alloc_counter(0);
    int         posted  = 0;
    SimTime     last_at = 0;
    w.sim.spawn(0, [&]() -> Task<> {
        for (int i = 0; i < 501; ++i)
        {
            DeferredWork work;
            work.op        = RemoteWrite{src.offset, 8, RemoteAddress{1, region.key, 8u * static_cast<std::size_t>(i)}};
            work.trigger   = trigger;
            work.threshold = static_cast<std::uint64_t>(i + 1);
            work.label     = "send " + std::to_string(i + 1);
            co_await w.fabric.post_deferred(0, std::move(work));
            ++posted;
            last_at = w.sim.now();
        }
    });
    w.sim.spawn(1, [&]() -> Task<> {
        co_await w.sim.sleep(10000);
        if (posted != 500 || w.fabric.pool_in_use(0) != 500)
        {
            v.fail("host was not stalled at post 501 (posted " + std::to_string(posted) + ")");
        }
        // Retire the first entry.
        w.fabric.increment_counter(trigger);
    });
    RunOutcome out = w.sim.run_until_quiescent();
    if (posted != 501 || !out.completed() || last_at < 10000)
    {
        v.fail("post 501 did not complete after a retirement");
    }
    if (w.fabric.pool_high_water(0) != 500)
    {
        v.fail("pool high water " + std::to_string(w.fabric.pool_high_water(0)));
    }
    return "post 501 stalled until t=" + std::to_string(last_at) + " ns";
}

/// 251 regular sends (two entries each) against a receiver that starts late.
std::string stream_sends_fill_pool(Verdict& v)
{
    World                 w(2);
    StreamId              s0 = w.gpu.create_stream(0);
    StreamId              s1 = w.gpu.create_stream(1);
    StQueue*              q0 = w.st.queue_init(QueueKind::cxi, s0);
    StQueue*              q1 = w.st.queue_init(QueueKind::cxi, s1);
    std::vector<Request*> sends, recvs;
    for (int tag = 0; tag < 251; ++tag)
    {
        sends.push_back(w.mpi.send_init(0, w.fabric.memory(0).allocate(8), 1, tag, w.mpi.world()));
        recvs.push_back(w.mpi.recv_init(1, w.fabric.memory(1).allocate(8), 0, tag, w.mpi.world()));
    }
    SimTime resumed = 0;
    w.sim.spawn(0, [&]() -> Task<> {
        co_await w.mpi.match_all(sends);
        for (Request* r : sends)
        {
            co_await w.st.enqueue_start(q0, r);
        }
        resumed = w.sim.now();
        w.st.enqueue_wait_all(q0);
        co_await w.st.queue_wait(q0);
    });
    w.sim.spawn(1, [&]() -> Task<> {
        co_await w.mpi.match_all(recvs);
        co_await w.sim.sleep(100000);
        co_await w.st.enqueue_start_all(q1, recvs);
        w.st.enqueue_wait_all(q1);
        co_await w.st.queue_wait(q1);
    });
    RunOutcome out = w.sim.run_until_quiescent();
    if (!out.completed() || resumed < 100000)
    {
        v.fail("251st stream-triggered send did not stall until the receiver started");
    }
    if (w.fabric.pool_high_water(0) > 500 || w.st.stats().max_entries_per_op > 2)
    {
        v.fail("pool or per-op entry ceiling exceeded");
    }
    return "251st send (entries 501-502) resumed at t=" + std::to_string(resumed) + " ns";
}

std::string missing_partner(Verdict& v)
{
    World              w(2);
    StreamId           s0   = w.gpu.create_stream(0);
    StQueue*           q0   = w.st.queue_init(QueueKind::cxi, s0);
    PersistentRequest* send = w.mpi.send_init(0, w.fabric.memory(0).allocate(64), 1, 0, w.mpi.world());
    PersistentRequest* recv = w.mpi.recv_init(1, w.fabric.memory(1).allocate(64), 0, 0, w.mpi.world());
    w.sim.spawn(0, [&]() -> Task<> {
        std::vector<Request*> mine{send};
        co_await w.mpi.match_all(mine);
        co_await w.st.enqueue_start(q0, send);
        w.st.enqueue_wait(q0, send);
        co_await w.st.queue_wait(q0);
    });
    w.sim.spawn(1, [&]() -> Task<> {
        std::vector<Request*> mine{recv};
        co_await w.mpi.match_all(mine);
    });
    RunOutcome  out  = w.sim.run_until_quiescent();
    std::string line;
    for (const auto& p : out.pending_work)
    {
        if (p.find("send data write") != std::string::npos &&
            p.find(w.st.resources(send)->trigger->to_string()) != std::string::npos)
        {
            line = p;
        }
    }
    if (out.completed() || line.empty())
    {
        v.fail("no deadlock report naming the CTS-armed data write");
    }
    return "deadlock report: \"" + line + "\"";
}

Verdict resource_semantics()
{
    Verdict     v;
    std::string a = five_hundred_and_one(v);
    std::string b = stream_sends_fill_pool(v);
    std::string c = missing_partner(v);
    if (CostModel{}.dwq_pool_capacity != 500 || StRuntime::max_entries_per_op != 2)
    {
        v.fail("pool ceiling or per-op entry limit has the wrong value");
    }
    if (v.pass)
    {
        v.detail = a + "; " + b + "; " + c + "; pool 500, <= 2 entries per op";
    }
    return v;
}

// -- 7 ---------------------------------------------------------------------

struct Fixture
{
    World              w{2};
    StreamId           s0 = w.gpu.create_stream(0);
    StQueue*           q0 = w.st.queue_init(QueueKind::cxi, s0);
    StQueue*           other = w.st.queue_init(QueueKind::cxi, s0);
    PersistentRequest* send  = w.mpi.send_init(0, w.fabric.memory(0).allocate(8), 1, 0, w.mpi.world());
    PersistentRequest* recv  = w.mpi.recv_init(1, w.fabric.memory(1).allocate(8), 0, 0, w.mpi.world());

    void match()
    {
        w.sim.spawn(0, [this]() -> Task<> {
            std::vector<Request*> mine{send};
            co_await w.mpi.match_all(mine);
        });
        w.sim.spawn(1, [this]() -> Task<> {
            std::vector<Request*> mine{recv};
            co_await w.mpi.match_all(mine);
        });
        w.sim.run_until_quiescent();
    }

    /// Runs `body` as a rank-0 task; returns the error it raised.
    std::optional<Errc> on_rank0(std::function<Task<>()> body)
    {
        std::optional<Errc> got;
        w.sim.spawn(0, [this, body, &got]() -> Task<> {
            try
            {
                co_await body();
            }
            catch (const Error& e)
            {
                got = e.code();
            }
        });
        w.sim.run_until_quiescent();
        return got;
    }
};

void expect(Verdict& v, const std::string& rule, std::optional<Errc> got, Errc want)
{
    if (got != want)
    {
        v.fail(rule + " raised " + (got ? std::string(to_string(*got)) : "nothing"));
    }
}

Verdict api_conformance()
{
    Verdict v;
    {
        Fixture   f;
        Transfer* t = f.w.mpi.irecv(0, f.w.fabric.memory(0).allocate(8), 1, 3, f.w.mpi.world());
        std::optional<Errc> got;
        try
        {
            f.w.mpi.imatch_all({t});
        }
        catch (const Error& e)
        {
            got = e.code();
        }
        expect(v, "non-persistent match input", got, Errc::not_persistent);
    }
    {
        Fixture f;
        f.match();
        PersistentRequest* loose = f.w.mpi.send_init(0, f.w.fabric.memory(0).allocate(8), 1, 9, f.w.mpi.world());
        auto got = f.on_rank0([&]() -> Task<> {
            std::vector<Request*> list{f.send, loose};
            co_await f.w.st.enqueue_start_all(f.q0, list);
        });
        expect(v, "unmatched enqueue", got, Errc::not_matched);
        if (f.w.gpu.enqueued(f.s0) != 0 || f.w.fabric.pool_in_use(0) != 0 || f.send->epoch != 0 ||
            f.q0->outstanding() != 0)
        {
            v.fail("unmatched enqueue left partial state behind");
        }
    }
    {
        Fixture f;
        f.match();
        auto got = f.on_rank0([&]() -> Task<> {
            co_await f.w.st.enqueue_start(f.q0, f.send);
            co_await f.w.st.enqueue_start(f.q0, f.send);
        });
        expect(v, "double start without wait", got, Errc::already_started);
    }
    {
        Fixture f;
        f.match();
        auto got = f.on_rank0([&]() -> Task<> {
            co_await f.w.st.enqueue_start(f.q0, f.send);
            f.w.st.enqueue_wait(f.other, f.send);
        });
        expect(v, "cross-queue wait", got, Errc::wrong_queue);
    }
    {
        Fixture f;
        f.match();
        auto got = f.on_rank0([&]() -> Task<> {
            co_await f.w.st.enqueue_start(f.q0, f.send);
            f.w.st.queue_free(f.q0);
        });
        expect(v, "free of non-empty queue", got, Errc::queue_not_empty);
    }
    if (v.pass)
    {
        v.detail = "not_persistent, not_matched (no partial state), already_started, wrong_queue, "
                   "queue_not_empty";
    }
    return v;
}

}  // namespace

int main()
{
    auto start = Clock::now();
    try
    {
        report(1, "protocol safety", protocol_safety());
        report(2, "Life oracle equivalence", oracle_equivalence());

        std::vector<BenchResult> pingpong;
        report(3, "latency ordering", latency_ordering(pingpong));
        report(4, "large-message convergence", large_message_convergence(pingpong));
        std::ofstream pp("acceptance_pingpong.csv");
        write_csv(pp, pingpong);

        SweepArtifacts sweep = full_sweep();
        std::ofstream("acceptance_sweep.csv") << sweep.csv;
        report(5, "small-message crossover", small_message_crossover(sweep));
        report(6, "resource semantics", resource_semantics());
        report(7, "API conformance", api_conformance());
        report(8, "determinism", determinism(sweep));
    }
    catch (const std::exception& e)
    {
        std::cout << "FAIL acceptance aborted: " << e.what() << std::endl;
        return 1;
    }
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed")
              << " in " << seconds_since(start) << " s" << std::endl;
    return failures == 0 ? 0 : 1;
}
