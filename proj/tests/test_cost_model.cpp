#include <gtest/gtest.h>

#include <sstream>

#include "stsim/cost_model.hpp"

using namespace stsim;

TEST(CostModel, Defaults)
{
    CostModel m;
    EXPECT_EQ(m.kernel_launch_ns, 1000u);
    EXPECT_EQ(m.gpu_barrier_ns, 1000u);
    EXPECT_EQ(m.match_setup_ns, 3000u);
    EXPECT_EQ(m.wire_latency_ns, 2000u);
    EXPECT_EQ(m.bandwidth_bytes_per_ns, 25u);
    EXPECT_EQ(m.atomic_ns, 500u);
    EXPECT_EQ(m.eager_threshold_bytes, 8192u);
    EXPECT_EQ(m.dwq_pool_capacity, 500u);
}

TEST(CostModel, TransferTime)
{
    CostModel m;
    EXPECT_EQ(m.transfer_time(0), 2000u);
    EXPECT_EQ(m.transfer_time(25000), 3000u);
    // ceil
    EXPECT_EQ(m.transfer_time(26), 2002u);
    // 1 MiB: 2000 + ceil(1048576 / 25)
    EXPECT_EQ(m.transfer_time(1 << 20), 2000u + 41944u);
}

TEST(CostModel, BandwidthAsymptote)
{
    CostModel m;
    double    a = static_cast<double>(m.transfer_time(1u << 30));
    double    b = static_cast<double>(m.transfer_time(1u << 31));
    EXPECT_NEAR(b / a, 2.0, 1e-4);
}

TEST(CostModel, ParseOverridesAndComments)
{
    CostModel m = CostModel::parse("# comment\n wire_latency_ns = 10\n\natomic_ns=3 # trailing\n");
    EXPECT_EQ(m.wire_latency_ns, 10u);
    EXPECT_EQ(m.atomic_ns, 3u);
    EXPECT_EQ(m.kernel_launch_ns, 1000u);
}

TEST(CostModel, RoundTrip)
{
    CostModel m;
    m.stream_op_gap_ns = 7;
    m.dwq_pool_capacity = 12;
    std::ostringstream out;
    m.write(out);
    EXPECT_EQ(CostModel::parse(out.str()), m);
}

TEST(CostModel, RejectsBadInput)
{
    EXPECT_THROW(CostModel::parse("nope=1"), std::invalid_argument);
    EXPECT_THROW(CostModel::parse("atomic_ns=-1"), std::invalid_argument);
    EXPECT_THROW(CostModel::parse("atomic_ns"), std::invalid_argument);
    EXPECT_THROW(CostModel::parse("bandwidth_bytes_per_ns=0"), std::invalid_argument);
    EXPECT_THROW(CostModel::load("/nonexistent/cost.txt"), std::runtime_error);
}
