#include <gtest/gtest.h>

#include <sstream>

#include "stsim/simclock.hpp"

using namespace stsim;

TEST(Simclock, ZeroDelayFiresBeforeLaterEvents)
{
    Simulator        sim;
    std::vector<int> order;
    sim.schedule(1, ComponentId{Component::nic, 0, 0}, "late", [&] { order.push_back(1); });
    sim.schedule(0, ComponentId{Component::nic, 0, 0}, "deliver", [&] { order.push_back(0); });
    EXPECT_TRUE(sim.run_until_quiescent().completed());
    EXPECT_EQ(order, (std::vector<int>{0, 1}));
}

TEST(Simclock, EqualTimesDispatchInSeqOrder)
{
    Simulator        sim;
    std::vector<int> order;
    for (int i = 0; i < 5; ++i)
    {
        sim.schedule(7, ComponentId{}, "tick", [&, i] { order.push_back(i); });
    }
    sim.run_until_quiescent();
    EXPECT_EQ(order, (std::vector<int>{0, 1, 2, 3, 4}));
}

TEST(Simclock, WireLatencyDelay)
{
    Simulator sim;
    SimTime   fired = 0;
    sim.schedule(2000, ComponentId{Component::nic, 1, 0}, "deliver", [&] { fired = sim.now(); });
    sim.run_until_quiescent();
    EXPECT_EQ(fired, 2000u);
}

TEST(Simclock, EmptySimulationCompletesAtZero)
{
    Simulator  sim;
    RunOutcome out = sim.run_until_quiescent();
    EXPECT_TRUE(out.completed());
    EXPECT_EQ(out.end_time, 0u);
}

TEST(Simclock, TasksSleepAndFinish)
{
    Simulator sim;
    SimTime   a = 0;
    sim.spawn(0, [&]() -> Task<> {
        co_await sim.sleep(10);
        co_await sim.sleep(5);
        a = sim.now();
    });
    RunOutcome out = sim.run_until_quiescent();
    EXPECT_TRUE(out.completed());
    EXPECT_EQ(a, 15u);
}

TEST(Simclock, NestedTasksReturnValues)
{
    Simulator sim;
    int       got = 0;
    auto      inner = [&](int x) -> Task<int> {
        co_await sim.sleep(3);
        co_return x * 2;
    };
    sim.spawn(0, [&]() -> Task<> {
        int v = co_await inner(21);
        got   = v;
    });
    sim.run_until_quiescent();
    EXPECT_EQ(got, 42);
    EXPECT_EQ(sim.now(), 3u);
}

TEST(Simclock, BlockedTaskIsReportedAsDeadlock)
{
    Simulator sim;
    Condition never;
    sim.spawn(1, [&]() -> Task<> {
        co_await sim.wait_until(never, "the flag", [] { return false; });
    });
    sim.add_pending_work_reporter([](std::vector<std::string>& out) { out.push_back("thing"); });
    RunOutcome out = sim.run_until_quiescent();
    ASSERT_FALSE(out.completed());
    ASSERT_EQ(out.blocked.size(), 1u);
    EXPECT_EQ(out.blocked[0].rank, 1);
    EXPECT_EQ(out.blocked[0].condition, "the flag");
    EXPECT_EQ(out.pending_work, (std::vector<std::string>{"thing"}));
    EXPECT_NE(out.report().find("the flag"), std::string::npos);
}

TEST(Simclock, ConditionWakesWaiter)
{
    Simulator sim;
    Condition cond;
    bool      flag = false;
    SimTime   woke = 0;
    sim.spawn(0, [&]() -> Task<> {
        co_await sim.wait_until(cond, "flag", [&] { return flag; });
        woke = sim.now();
    });
    sim.schedule(50, ComponentId{}, "set", [&] {
        flag = true;
        sim.notify(cond);
    });
    EXPECT_TRUE(sim.run_until_quiescent().completed());
    EXPECT_EQ(woke, 50u);
}

TEST(Simclock, ExceptionsPropagateOutOfRun)
{
    Simulator sim;
    sim.spawn(0, [&]() -> Task<> {
        co_await sim.sleep(1);
        throw std::runtime_error("boom");
    });
    EXPECT_THROW(sim.run_until_quiescent(), std::runtime_error);
}

TEST(Simclock, TraceFormat)
{
    Simulator sim;
    sim.enable_trace();
    sim.schedule(5, ComponentId{Component::gpu, 2, 3}, "op", [] {});
    sim.run_until_quiescent();
    std::ostringstream out;
    sim.write_trace(out);
    EXPECT_EQ(out.str(), "5,0,gpu@2.3,op\n");
}

TEST(Simclock, TimeNeverDecreases)
{
    Simulator sim;
    sim.enable_trace();
    for (int i = 0; i < 50; ++i)
    {
        sim.schedule(static_cast<SimTime>((i * 37) % 11), ComponentId{}, "x", [&, i] {
            if (i % 3 == 0)
            {
                sim.schedule(static_cast<SimTime>(i % 4), ComponentId{}, "y", [] {});
            }
        });
    }
    sim.run_until_quiescent();
    const auto& t = sim.trace();
    for (std::size_t i = 1; i < t.size(); ++i)
    {
        EXPECT_LE(t[i - 1].time, t[i].time);
    }
}
