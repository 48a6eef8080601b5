#ifndef STSIM_SIMCLOCK_HPP
#define STSIM_SIMCLOCK_HPP

#include <coroutine>
#include <cstdint>
#include <deque>
#include <functional>
#include <iosfwd>
#include <queue>
#include <string>
#include <vector>

#include "stsim/task.hpp"

namespace stsim
{

/// Virtual nanoseconds.
using SimTime = std::uint64_t;
using EventId = std::uint64_t;

enum class Component
{
    host,
    nic,
    gpu,
    mpi,
};

/// Identifies the simulated agent an event is addressed to. `index` is the
/// stream index for gpu components and unused otherwise.
struct ComponentId
{
    Component kind  = Component::host;
    int       rank  = 0;
    int       index = 0;

    std::string to_string() const;
};

struct TraceRecord
{
    SimTime     time;
    EventId     seq;
    ComponentId target;
    const char* kind;
};

/// Something host tasks and simulated devices can wait on. Components call
/// Simulator::notify after changing the state a waiter's predicate reads.
class Condition
{
public:
    Condition()                            = default;
    Condition(const Condition&)            = delete;
    Condition& operator=(const Condition&) = delete;

    std::size_t waiter_count() const
    {
        return waiters_.size();
    }

private:
    friend class Simulator;

    struct Waiter
    {
        std::function<bool()> ready;
        std::function<void()> wake;
    };
    std::vector<Waiter> waiters_;
};

struct BlockedTask
{
    std::size_t task;
    int         rank;
    std::string condition;
};

struct RunOutcome
{
    enum class Status
    {
        completed,
        deadlock,
    };

    Status                   status   = Status::completed;
    SimTime                  end_time = 0;
    std::vector<BlockedTask> blocked;
    /// Armed-but-unfired deferred work and stalled device operations, as
    /// reported by the components registered with the simulator.
    std::vector<std::string> pending_work;

    bool completed() const
    {
        return status == Status::completed;
    }

    std::string report() const;
};

/// Single-threaded discrete-event engine. Host programs are coroutines that
/// suspend on `sleep` or `wait_until`; everything else is an event callback.
/// Events at equal time dispatch in scheduling order.
class Simulator
{
public:
    using Action   = std::function<void()>;
    using Reporter = std::function<void(std::vector<std::string>&)>;

    Simulator() = default;
    Simulator(const Simulator&)            = delete;
    Simulator& operator=(const Simulator&) = delete;

    SimTime now() const
    {
        return now_;
    }

    EventId schedule(SimTime delay, ComponentId target, const char* kind, Action action);

    /// Registers a host program for `rank`. The factory is kept alive for the
    /// lifetime of the task so lambda captures stay valid across suspensions.
    std::size_t spawn(int rank, std::function<Task<>()> program);

    /// Dispatches events until none remain. Reports deadlock when some host
    /// task is still blocked at that point.
    RunOutcome run_until_quiescent();

    std::size_t pending_events() const
    {
        return queue_.size();
    }

    bool task_finished(std::size_t task) const;

    /// Rank of the host task currently executing, or -1 from event context.
    int current_rank() const;

    // -- awaitables, valid only inside host tasks ---------------------------

    struct SleepAwaiter
    {
        Simulator* sim;
        SimTime    delay;

        bool await_ready() const noexcept
        {
            return false;
        }
        void await_suspend(std::coroutine_handle<> h);
        void await_resume() const noexcept {}
    };

    struct WaitAwaiter
    {
        Simulator*            sim;
        Condition*            condition;
        std::string           what;
        std::function<bool()> ready;

        bool await_ready() const
        {
            return ready();
        }
        void await_suspend(std::coroutine_handle<> h);
        void await_resume() const noexcept {}
    };

    SleepAwaiter sleep(SimTime delay)
    {
        return SleepAwaiter{this, delay};
    }

    /// Suspends the current host task until `ready()` holds. `what` names the
    /// blocking condition in deadlock reports.
    WaitAwaiter wait_until(Condition& condition, std::string what,
                           std::function<bool()> ready)
    {
        return WaitAwaiter{this, &condition, std::move(what), std::move(ready)};
    }

    /// Registers a non-task waiter (e.g. a stream poll). `wake` runs inside the
    /// notify call once `ready()` holds; it never runs synchronously here.
    void watch(Condition& condition, std::function<bool()> ready,
               std::function<void()> wake);

    void notify(Condition& condition);

    void add_pending_work_reporter(Reporter reporter);

    // -- tracing -------------------------------------------------------------

    void enable_trace(bool on = true)
    {
        tracing_ = on;
    }

    const std::vector<TraceRecord>& trace() const
    {
        return trace_;
    }

    /// Newline-delimited `time,seq,target,kind` records.
    void write_trace(std::ostream& out) const;

private:
    struct Event
    {
        SimTime     time;
        EventId     seq;
        ComponentId target;
        const char* kind;
        Action      action;
    };

    struct Later
    {
        bool operator()(const Event& a, const Event& b) const
        {
            if (a.time != b.time)
            {
                return a.time > b.time;
            }
            return a.seq > b.seq;
        }
    };

    enum class TaskState
    {
        runnable,
        blocked,
        finished,
    };

    struct HostTask
    {
        int                      rank;
        std::function<Task<>()>  factory;
        Task<>                   root;
        TaskState                state = TaskState::runnable;
        std::string              blocked_on;
    };

    void resume(std::size_t task, std::coroutine_handle<> h);
    void wake_task(std::size_t task, std::coroutine_handle<> h);

    SimTime                                          now_      = 0;
    EventId                                          next_seq_ = 0;
    std::priority_queue<Event, std::vector<Event>, Later> queue_;
    std::deque<HostTask>                             tasks_;
    std::ptrdiff_t                                   current_ = -1;
    std::vector<Reporter>                            reporters_;
    bool                                             tracing_ = false;
    std::vector<TraceRecord>                         trace_;
};

}  // namespace stsim

#endif
