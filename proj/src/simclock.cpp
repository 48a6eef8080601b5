#include "stsim/simclock.hpp"

#include <ostream>
#include <sstream>
#include <stdexcept>

namespace stsim
{

std::string ComponentId::to_string() const
{
    switch (kind)
    {
        case Component::host:
            return "host@" + std::to_string(rank);
        case Component::nic:
            return "nic@" + std::to_string(rank);
        case Component::gpu:
            return "gpu@" + std::to_string(rank) + "." + std::to_string(index);
        case Component::mpi:
            return "mpi@" + std::to_string(rank);
    }
    return "?";
}

std::string RunOutcome::report() const
{
    std::ostringstream out;
    if (completed())
    {
        out << "completed at t=" << end_time << "\n";
        return out.str();
    }
    out << "deadlock at t=" << end_time << "\n";
    for (const auto& b : blocked)
    {
        out << "  task " << b.task << " (rank " << b.rank << ") blocked in " << b.condition
            << "\n";
    }
    for (const auto& p : pending_work)
    {
        out << "  pending: " << p << "\n";
    }
    return out.str();
}

EventId Simulator::schedule(SimTime delay, ComponentId target, const char* kind,
                            Action action)
{
    EventId id = next_seq_++;
    queue_.push(Event{now_ + delay, id, target, kind, std::move(action)});
    return id;
}

std::size_t Simulator::spawn(int rank, std::function<Task<>()> program)
{
    if (rank < 0)
    {
        throw std::invalid_argument("spawn: negative rank");
    }
    std::size_t id = tasks_.size();
    tasks_.push_back(HostTask{rank, std::move(program), {}, TaskState::runnable, {}});
    schedule(0, ComponentId{Component::host, rank, 0}, "task_start", [this, id] {
        HostTask& t = tasks_[id];
        t.root      = t.factory();
        resume(id, t.root.handle());
    });
    return id;
}

bool Simulator::task_finished(std::size_t task) const
{
    return tasks_.at(task).state == TaskState::finished;
}

int Simulator::current_rank() const
{
    return current_ < 0 ? -1 : tasks_[static_cast<std::size_t>(current_)].rank;
}

void Simulator::resume(std::size_t task, std::coroutine_handle<> h)
{
    HostTask& t = tasks_[task];
    t.state     = TaskState::runnable;
    t.blocked_on.clear();

    std::ptrdiff_t saved = current_;
    current_             = static_cast<std::ptrdiff_t>(task);
    h.resume();
    current_ = saved;

    HostTask& after = tasks_[task];
    if (after.root.done())
    {
        after.state = TaskState::finished;
        after.root.rethrow_if_failed();
    }
}

void Simulator::wake_task(std::size_t task, std::coroutine_handle<> h)
{
    schedule(0, ComponentId{Component::host, tasks_[task].rank, 0}, "task_resume",
             [this, task, h] { resume(task, h); });
}

void Simulator::SleepAwaiter::await_suspend(std::coroutine_handle<> h)
{
    if (sim->current_ < 0)
    {
        throw std::logic_error("sleep awaited outside a host task");
    }
    auto task = static_cast<std::size_t>(sim->current_);
    sim->schedule(delay, ComponentId{Component::host, sim->tasks_[task].rank, 0},
                  "task_resume", [s = sim, task, h] { s->resume(task, h); });
}

void Simulator::WaitAwaiter::await_suspend(std::coroutine_handle<> h)
{
    if (sim->current_ < 0)
    {
        throw std::logic_error("wait_until awaited outside a host task");
    }
    auto      task = static_cast<std::size_t>(sim->current_);
    HostTask& t    = sim->tasks_[task];
    t.state        = TaskState::blocked;
    t.blocked_on   = std::move(what);
    condition->waiters_.push_back(
        Condition::Waiter{std::move(ready), [s = sim, task, h] { s->wake_task(task, h); }});
}

void Simulator::watch(Condition& condition, std::function<bool()> ready,
                      std::function<void()> wake)
{
    condition.waiters_.push_back(Condition::Waiter{std::move(ready), std::move(wake)});
}

void Simulator::notify(Condition& condition)
{
    std::vector<Condition::Waiter> woken;
    auto&                          waiters = condition.waiters_;
    for (auto it = waiters.begin(); it != waiters.end();)
    {
        if (it->ready())
        {
            woken.push_back(std::move(*it));
            it = waiters.erase(it);
        }
        else
        {
            ++it;
        }
    }
    for (auto& w : woken)
    {
        w.wake();
    }
}

void Simulator::add_pending_work_reporter(Reporter reporter)
{
    reporters_.push_back(std::move(reporter));
}

RunOutcome Simulator::run_until_quiescent()
{
    while (!queue_.empty())
    {
        // priority_queue::top is const; the element is discarded right after.
        Event ev = std::move(const_cast<Event&>(queue_.top()));
        queue_.pop();
        if (ev.time < now_)
        {
            throw std::logic_error("event scheduled in the past");
        }
        now_ = ev.time;
        if (tracing_)
        {
            trace_.push_back(TraceRecord{ev.time, ev.seq, ev.target, ev.kind});
        }
        ev.action();
    }

    RunOutcome outcome;
    outcome.end_time = now_;
    for (std::size_t i = 0; i < tasks_.size(); ++i)
    {
        const HostTask& t = tasks_[i];
        if (t.state != TaskState::finished)
        {
            outcome.status = RunOutcome::Status::deadlock;
            outcome.blocked.push_back(BlockedTask{
                i, t.rank, t.blocked_on.empty() ? std::string("<runnable>") : t.blocked_on});
        }
    }
    if (!outcome.completed())
    {
        for (const auto& r : reporters_)
        {
            r(outcome.pending_work);
        }
    }
    return outcome;
}

void Simulator::write_trace(std::ostream& out) const
{
    for (const auto& r : trace_)
    {
        out << r.time << ',' << r.seq << ',' << r.target.to_string() << ',' << r.kind << '\n';
    }
}

}  // namespace stsim
