#ifndef STSIM_WORLD_HPP
#define STSIM_WORLD_HPP

#include "stsim/cost_model.hpp"
#include "stsim/gpusim.hpp"
#include "stsim/mpicore.hpp"
#include "stsim/nicsim.hpp"
#include "stsim/simclock.hpp"
#include "stsim/stqueue.hpp"

namespace stsim
{

/// One simulated machine: clock, NICs, GPUs, MPI layer and stream-triggered
/// runtime, wired together for `ranks` ranks.
struct World
{
    World(int ranks, const CostModel& model = CostModel{})
        : cost(model), fabric(sim, cost, ranks), gpu(sim, fabric), mpi(sim, fabric), st(mpi, gpu)
    {
        cost.validate();
    }

    World(const World&)            = delete;
    World& operator=(const World&) = delete;

    CostModel cost;
    Simulator sim;
    Fabric    fabric;
    Gpu       gpu;
    Mpi       mpi;
    StRuntime st;
};

}  // namespace stsim

#endif
