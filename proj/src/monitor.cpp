#include "stsim/monitor.hpp"

#include <algorithm>

#include "stsim/error.hpp"

namespace stsim
{

ProtocolMonitor::ProtocolMonitor(World& world) : world_(world)
{
    FabricObserver fo;
    fo.counter_changed = [this](CounterId c, std::uint64_t before, std::uint64_t after) {
        auto it = last_value_.find(c);
        if (after < before || (it != last_value_.end() && before < it->second))
        {
            violation(counts_.counter_regressions, "counter " + c.to_string() + " went from " +
                                                       std::to_string(before) + " to " +
                                                       std::to_string(after));
        }
        last_value_[c] = after;
    };
    fo.entry_fired = [this](EntryId id, int, const DeferredWork& work) {
        if (!fired_.insert(id).second)
        {
            violation(counts_.duplicate_fires, "entry " + std::to_string(id) + " fired twice");
        }
        auto it = send_by_trigger_.find(work.trigger);
        if (it == send_by_trigger_.end() || !std::holds_alternative<RemoteWrite>(work.op))
        {
            return;
        }
        SendState& s = sends_[it->second];
        ++s.fires;
        if (s.triggers < s.fires || s.cts < s.fires)
        {
            violation(counts_.early_send_writes,
                      "send " + std::to_string(it->second) + " wrote epoch " +
                          std::to_string(s.fires) + " after " + std::to_string(s.triggers) +
                          " triggers and " + std::to_string(s.cts) + " CTS");
        }
    };
    fo.write_delivered = [this](int rank, std::size_t offset, std::size_t, EntryId) {
        for (auto& [id, r] : recvs_)
        {
            if (r.rank == rank && offset >= r.base && offset < r.base + std::max<std::size_t>(r.len, 1))
            {
                ++r.writes;
                if (r.writes > r.starts)
                {
                    violation(counts_.early_receive_writes,
                              "receive " + std::to_string(id) + " got data for epoch " +
                                  std::to_string(r.writes) + " before its start executed");
                }
            }
        }
    };
    fo.atomic_delivered = [this](int rank, std::size_t offset, EntryId) {
        auto it = send_by_cts_.find({rank, offset});
        if (it != send_by_cts_.end())
        {
            ++sends_[it->second].cts;
        }
    };
    world_.fabric.set_observer(std::move(fo));

    StObserver so;
    so.start_executed = [this](const PersistentRequest& p, std::uint64_t) {
        if (auto r = recvs_.find(p.id()); r != recvs_.end())
        {
            RecvState& rs = r->second;
            if (read(rs) != rs.snapshot)
            {
                violation(counts_.early_receive_writes,
                          "receive " + std::to_string(p.id()) +
                              " buffer changed before start " + std::to_string(rs.starts + 1));
            }
            ++rs.starts;
        }
    };
    so.wait_completed = [this](const PersistentRequest& p, std::uint64_t) {
        if (auto r = recvs_.find(p.id()); r != recvs_.end())
        {
            r->second.snapshot = read(r->second);
        }
    };
    world_.st.set_observer(std::move(so));

    // The doorbell is observed at op start, before it bumps the counter and
    // possibly fires the data write.
    world_.gpu.set_observer(GpuObserver{[this](StreamId, std::uint64_t, const StreamOp& op, bool finished) {
        auto* w = std::get_if<WriteValueOp>(&op);
        if (finished || w == nullptr)
        {
            return;
        }
        if (auto it = send_by_trigger_.find(w->counter); it != send_by_trigger_.end())
        {
            ++sends_[it->second].triggers;
        }
    }});
}

void ProtocolMonitor::track(const PersistentRequest* request)
{
    const StResources* res = world_.st.resources(request);
    if (res == nullptr)
    {
        throw Error(Errc::not_matched, "only matched requests can be tracked");
    }
    if (request->kind == RequestKind::recv)
    {
        RecvState r;
        r.rank     = request->rank();
        r.base     = res->data_region->base;
        r.len      = res->data_region->len;
        r.snapshot = read(r);
        recvs_[request->id()] = std::move(r);
    }
    else if (request->kind == RequestKind::send)
    {
        SendState s;
        s.cts_slot                          = res->cts_region->base;
        sends_[request->id()]               = s;
        send_by_trigger_[*res->trigger]     = request->id();
        send_by_cts_[{request->rank(), s.cts_slot}] = request->id();
    }
}

void ProtocolMonitor::finish()
{
    std::uint64_t armed = world_.st.stats().entries_armed;
    if (fired_.size() < armed)
    {
        violation(counts_.missing_fires, std::to_string(armed - fired_.size()) +
                                             " armed entries never fired");
    }
}

void ProtocolMonitor::violation(std::uint64_t& counter, std::string what)
{
    ++counter;
    if (messages_.size() < 32)
    {
        messages_.push_back(std::move(what));
    }
}

std::vector<std::byte> ProtocolMonitor::read(const RecvState& r) const
{
    auto b = world_.fabric.memory(r.rank).bytes(r.base, r.len);
    return {b.begin(), b.end()};
}

}  // namespace stsim
