#include <gtest/gtest.h>

#include <numeric>

#include "stsim/error.hpp"
#include "stsim/mpicore.hpp"

using namespace stsim;

namespace
{

struct Rig
{
    explicit Rig(int ranks = 2) : fabric(sim, cost, ranks), mpi(sim, fabric) {}

    BufferRef buffer(int rank, std::size_t len, std::uint8_t seed = 0)
    {
        BufferRef b = fabric.memory(rank).allocate(len);
        auto      s = fabric.memory(rank).bytes(b);
        for (std::size_t i = 0; i < len; ++i)
        {
            s[i] = static_cast<std::byte>((i * 31 + seed) & 0xff);
        }
        return b;
    }

    bool same(BufferRef a, BufferRef b)
    {
        auto x = fabric.memory(a.rank).bytes(a);
        auto y = fabric.memory(b.rank).bytes(b);
        return std::equal(x.begin(), x.end(), y.begin(), y.end());
    }

    CostModel cost;
    Simulator sim;
    Fabric    fabric;
    Mpi       mpi;
};

template <class F>
Errc code_of(F&& f)
{
    try
    {
        f();
    }
    catch (const Error& e)
    {
        return e.code();
    }
    ADD_FAILURE() << "no stsim::Error thrown";
    return Errc::invalid_argument;
}

}  // namespace

TEST(Mpicore, EagerSendCompletesWithoutReceiver)
{
    Rig       rig;
    BufferRef src     = rig.buffer(0, 8, 1);
    BufferRef dst     = rig.buffer(1, 8, 9);
    SimTime   sent    = 99;
    SimTime   arrived = 0;
    rig.sim.spawn(0, [&]() -> Task<> {
        co_await rig.mpi.send(0, src, 1, 3, rig.mpi.world());
        sent = rig.sim.now();
    });
    rig.sim.spawn(1, [&]() -> Task<> {
        co_await rig.sim.sleep(50000);
        co_await rig.mpi.recv(1, dst, 0, 3, rig.mpi.world());
        arrived = rig.sim.now();
    });
    EXPECT_TRUE(rig.sim.run_until_quiescent().completed());
    EXPECT_EQ(sent, 0u);
    EXPECT_EQ(arrived, 50000u);
    EXPECT_TRUE(rig.same(src, dst));
    EXPECT_EQ(rig.mpi.stats().unexpected_messages, 1u);
}

TEST(Mpicore, RendezvousWaitsForCts)
{
    Rig         rig;
    std::size_t n   = 1 << 20;
    BufferRef   src = rig.buffer(0, n, 1);
    BufferRef   dst = rig.buffer(1, n, 2);
    SimTime     sent = 0, arrived = 0;
    rig.sim.spawn(0, [&]() -> Task<> {
        co_await rig.mpi.send(0, src, 1, 0, rig.mpi.world());
        sent = rig.sim.now();
    });
    rig.sim.spawn(1, [&]() -> Task<> {
        co_await rig.sim.sleep(10000);
        co_await rig.mpi.recv(1, dst, 0, 0, rig.mpi.world());
        arrived = rig.sim.now();
    });
    EXPECT_TRUE(rig.sim.run_until_quiescent().completed());
    // RTS lands at 1500, receive posted at 10000, CTS back after 1500 more.
    EXPECT_EQ(sent, 10000u + 1500u + rig.cost.injection_time(n));
    EXPECT_EQ(arrived, 10000u + 1500u + rig.cost.transfer_time(n));
    EXPECT_TRUE(rig.same(src, dst));
}

TEST(Mpicore, PostedReceiveRendezvousCost)
{
    Rig         rig;
    std::size_t n   = 8192;
    BufferRef   src = rig.buffer(0, n, 1);
    BufferRef   dst = rig.buffer(1, n, 2);
    SimTime     arrived = 0;
    rig.sim.spawn(0, [&]() -> Task<> { co_await rig.mpi.send(0, src, 1, 0, rig.mpi.world()); });
    rig.sim.spawn(1, [&]() -> Task<> {
        co_await rig.mpi.recv(1, dst, 0, 0, rig.mpi.world());
        arrived = rig.sim.now();
    });
    rig.sim.run_until_quiescent();
    EXPECT_EQ(arrived, rig.cost.match_setup_ns + rig.cost.transfer_time(n));
}

TEST(Mpicore, NonOvertakingAcrossProtocols)
{
    // An 8 KiB rendezvous RTS (1.5 us) would overtake a 4 KiB eager message
    // (2 us + 164 ns) on the wire.
    Rig       rig;
    BufferRef a  = rig.buffer(0, 4096, 1);
    BufferRef b  = rig.buffer(0, 8192, 2);
    BufferRef ra = rig.buffer(1, 8192, 0);
    BufferRef rb = rig.buffer(1, 8192, 0);
    rig.sim.spawn(0, [&]() -> Task<> {
        Transfer* x = rig.mpi.isend(0, a, 1, 5, rig.mpi.world());
        Transfer* y = rig.mpi.isend(0, b, 1, 5, rig.mpi.world());
        co_await rig.mpi.wait_all({x, y});
    });
    std::size_t first_len = 0;
    rig.sim.spawn(1, [&]() -> Task<> {
        co_await rig.sim.sleep(100000);
        Transfer* x = rig.mpi.irecv(1, ra, 0, 5, rig.mpi.world());
        Transfer* y = rig.mpi.irecv(1, rb, 0, 5, rig.mpi.world());
        first_len   = x->received_len;
        co_await rig.mpi.wait_all({x, y});
    });
    EXPECT_TRUE(rig.sim.run_until_quiescent().completed());
    EXPECT_EQ(first_len, 4096u);
    EXPECT_TRUE(rig.same(b, rb));
}

TEST(Mpicore, ZeroLengthMessage)
{
    Rig       rig;
    BufferRef src = rig.buffer(0, 0);
    BufferRef dst = rig.buffer(1, 0);
    rig.sim.spawn(0, [&]() -> Task<> { co_await rig.mpi.send(0, src, 1, 0, rig.mpi.world()); });
    rig.sim.spawn(1, [&]() -> Task<> { co_await rig.mpi.recv(1, dst, 0, 0, rig.mpi.world()); });
    EXPECT_TRUE(rig.sim.run_until_quiescent().completed());
}

TEST(Mpicore, InvalidRank)
{
    Rig       rig;
    BufferRef b = rig.buffer(0, 8);
    EXPECT_EQ(code_of([&] { rig.mpi.send_init(0, b, 2, 0, rig.mpi.world()); }), Errc::invalid_rank);
    EXPECT_EQ(code_of([&] { rig.mpi.recv_init(0, b, -1, 0, rig.mpi.world()); }), Errc::invalid_rank);
    EXPECT_EQ(code_of([&] { rig.mpi.isend(0, b, 1, -4, rig.mpi.world()); }), Errc::invalid_argument);
}

TEST(Mpicore, ReadyFlagYieldsRsend)
{
    Rig       rig;
    BufferRef b = rig.buffer(0, 0);
    EXPECT_EQ(rig.mpi.send_init(0, b, 1, 0, rig.mpi.world(), true)->kind, RequestKind::rsend);
    EXPECT_EQ(rig.mpi.send_init(0, b, 1, 0, rig.mpi.world())->kind, RequestKind::send);
    EXPECT_EQ(rig.mpi.recv_init(0, b, 1, 0, rig.mpi.world())->state, RequestState::inactive);
}

TEST(Mpicore, MatchPairsInPostingOrder)
{
    Rig                rig;
    auto               w = rig.mpi.world();
    PersistentRequest* A = rig.mpi.send_init(0, rig.buffer(0, 8), 1, 7, w);
    PersistentRequest* B = rig.mpi.send_init(0, rig.buffer(0, 8), 1, 7, w);
    PersistentRequest* C = rig.mpi.recv_init(1, rig.buffer(1, 8), 0, 7, w);
    PersistentRequest* D = rig.mpi.recv_init(1, rig.buffer(1, 8), 0, 7, w);
    rig.sim.spawn(0, [&]() -> Task<> { co_await rig.mpi.match_all({A, B}); });
    rig.sim.spawn(1, [&]() -> Task<> {
        co_await rig.sim.sleep(777);
        co_await rig.mpi.match_all({C, D});
    });
    EXPECT_TRUE(rig.sim.run_until_quiescent().completed());
    EXPECT_TRUE(rig.mpi.is_matched(A));
    EXPECT_TRUE(rig.mpi.is_matched(D));
    EXPECT_EQ(A->pair_id, C->id());
    EXPECT_EQ(B->pair_id, D->id());
    EXPECT_EQ(C->pair_id, A->id());
    EXPECT_EQ(D->pair_id, B->id());
    EXPECT_EQ(A->state, RequestState::matched);
}

TEST(Mpicore, MatchAcrossSeparateCalls)
{
    // Each side matches its two requests in separate blocking calls; rank 1
    // goes receive-first so the calls do not wait on each other.
    Rig                rig;
    auto               w  = rig.mpi.world();
    PersistentRequest* s0 = rig.mpi.send_init(0, rig.buffer(0, 8), 1, 1, w);
    PersistentRequest* r0 = rig.mpi.recv_init(0, rig.buffer(0, 8), 1, 1, w);
    PersistentRequest* s1 = rig.mpi.send_init(1, rig.buffer(1, 8), 0, 1, w);
    PersistentRequest* r1 = rig.mpi.recv_init(1, rig.buffer(1, 8), 0, 1, w);
    rig.sim.spawn(0, [&]() -> Task<> {
        co_await rig.mpi.match_all({s0});
        co_await rig.mpi.match_all({r0});
    });
    rig.sim.spawn(1, [&]() -> Task<> {
        co_await rig.mpi.match_all({r1});
        co_await rig.mpi.match_all({s1});
    });
    EXPECT_TRUE(rig.sim.run_until_quiescent().completed());
    EXPECT_EQ(s0->pair_id, r1->id());
    EXPECT_EQ(s1->pair_id, r0->id());
}

TEST(Mpicore, ImatchAllCoversSixteenRequests)
{
    Rig                             rig;
    auto                            w = rig.mpi.world();
    std::vector<Request*>           mine, theirs;
    for (int tag = 0; tag < 8; ++tag)
    {
        mine.push_back(rig.mpi.send_init(0, rig.buffer(0, 16), 1, tag, w));
        mine.push_back(rig.mpi.recv_init(0, rig.buffer(0, 16), 1, tag, w));
        theirs.push_back(rig.mpi.recv_init(1, rig.buffer(1, 16), 0, tag, w));
        theirs.push_back(rig.mpi.send_init(1, rig.buffer(1, 16), 0, tag, w));
    }
    MatchRequest* m      = nullptr;
    bool          early  = true;
    rig.sim.spawn(0, [&]() -> Task<> {
        m = rig.mpi.imatch_all(mine);
        co_await rig.sim.sleep(10);
        early = rig.mpi.test(m);
        co_await rig.mpi.wait(m);
    });
    rig.sim.spawn(1, [&]() -> Task<> {
        // Only half the counterparts at first.
        std::vector<Request*> a(theirs.begin(), theirs.begin() + 8);
        std::vector<Request*> b(theirs.begin() + 8, theirs.end());
        co_await rig.mpi.match_all(a);
        co_await rig.sim.sleep(50000);
        co_await rig.mpi.match_all(b);
    });
    RunOutcome out = rig.sim.run_until_quiescent();
    EXPECT_TRUE(out.completed()) << out.report();
    EXPECT_FALSE(early);
    for (Request* r : mine)
    {
        EXPECT_TRUE(rig.mpi.is_matched(r));
    }
    EXPECT_GE(out.end_time, 50000u);
}

TEST(Mpicore, MatchRejectsBadInput)
{
    Rig                rig;
    auto               w = rig.mpi.world();
    BufferRef          b = rig.buffer(0, 8);
    Transfer*          t = rig.mpi.isend(0, b, 1, 0, w);
    GeneralizedRequest* g = rig.mpi.grequest_start(0);
    EXPECT_EQ(code_of([&] { rig.mpi.imatch_all({t}); }), Errc::not_persistent);
    EXPECT_EQ(code_of([&] { rig.mpi.imatch_all({g}); }), Errc::not_persistent);

    PersistentRequest* s = rig.mpi.send_init(0, b, 1, 0, w);
    EXPECT_EQ(code_of([&] { rig.mpi.imatch_all({s, s}); }), Errc::already_matched);
    EXPECT_EQ(s->state, RequestState::inactive);
    rig.mpi.imatch_all({s});
    EXPECT_EQ(code_of([&] { rig.mpi.imatch_all({s}); }), Errc::already_matched);
    MatchRequest* m = rig.mpi.imatch_all({});
    EXPECT_EQ(code_of([&] { rig.mpi.imatch_all({m}); }), Errc::not_persistent);
    EXPECT_EQ(code_of([&] { rig.mpi.request_free(m); }), Errc::request_busy);
}

TEST(Mpicore, PlainPersistentRequestsUnchanged)
{
    Rig                rig;
    auto               w   = rig.mpi.world();
    BufferRef          src = rig.buffer(0, 64, 3);
    BufferRef          dst = rig.buffer(1, 64, 0);
    PersistentRequest* s   = rig.mpi.send_init(0, src, 1, 2, w);
    PersistentRequest* r   = rig.mpi.recv_init(1, dst, 0, 2, w);
    rig.sim.spawn(0, [&]() -> Task<> {
        for (int i = 0; i < 3; ++i)
        {
            rig.mpi.fabric().memory(0).bytes(src)[0] = static_cast<std::byte>(i);
            rig.mpi.start(s);
            co_await rig.mpi.wait(s);
            co_await rig.sim.sleep(10000);
        }
    });
    std::vector<int> seen;
    rig.sim.spawn(1, [&]() -> Task<> {
        for (int i = 0; i < 3; ++i)
        {
            rig.mpi.start(r);
            EXPECT_EQ(code_of([&] { rig.mpi.start(r); }), Errc::already_started);
            co_await rig.mpi.wait(r);
            seen.push_back(static_cast<int>(rig.mpi.fabric().memory(1).bytes(dst)[0]));
        }
    });
    EXPECT_TRUE(rig.sim.run_until_quiescent().completed());
    EXPECT_EQ(seen, (std::vector<int>{0, 1, 2}));
    EXPECT_TRUE(rig.same(src, dst));
    EXPECT_FALSE(rig.mpi.is_matched(s));
    EXPECT_EQ(s->state, RequestState::inactive);
    EXPECT_EQ(rig.mpi.live_transfers(), 0u);
}

TEST(Mpicore, FreeReleasesAndChecksBusy)
{
    Rig                rig;
    auto               w = rig.mpi.world();
    PersistentRequest* r = rig.mpi.recv_init(1, rig.buffer(1, 8), 0, 0, w);
    rig.mpi.start(r);
    EXPECT_EQ(code_of([&] { rig.mpi.request_free(r); }), Errc::request_busy);
    rig.sim.spawn(0, [&]() -> Task<> { co_await rig.mpi.send(0, rig.buffer(0, 8), 1, 0, w); });
    rig.sim.spawn(1, [&]() -> Task<> { co_await rig.mpi.wait(r); });
    EXPECT_TRUE(rig.sim.run_until_quiescent().completed());
    rig.mpi.request_free(r);
    EXPECT_EQ(r->state, RequestState::freed);
    EXPECT_EQ(code_of([&] { rig.mpi.request_free(r); }), Errc::invalid_argument);
}

TEST(Mpicore, UnmatchedPartnerIsDeadlock)
{
    Rig                rig;
    PersistentRequest* s = rig.mpi.send_init(0, rig.buffer(0, 8), 1, 0, rig.mpi.world());
    rig.sim.spawn(0, [&]() -> Task<> { co_await rig.mpi.match_all({s}); });
    RunOutcome out = rig.sim.run_until_quiescent();
    EXPECT_FALSE(out.completed());
    EXPECT_EQ(s->state, RequestState::match_pending);
}
