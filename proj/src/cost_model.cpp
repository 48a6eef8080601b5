#include "stsim/cost_model.hpp"

#include <charconv>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace stsim
{

namespace
{

std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b)
{
    return a / b + (a % b != 0 ? 1 : 0);
}

std::string_view trim(std::string_view s)
{
    const char* ws    = " \t\r\n";
    auto        first = s.find_first_not_of(ws);
    if (first == std::string_view::npos)
    {
        return {};
    }
    auto last = s.find_last_not_of(ws);
    return s.substr(first, last - first + 1);
}

template <class F>
void for_each_field(CostModel& m, F&& f)
{
    f("kernel_launch_ns", m.kernel_launch_ns);
    f("gpu_barrier_ns", m.gpu_barrier_ns);
    f("match_setup_ns", m.match_setup_ns);
    f("wire_latency_ns", m.wire_latency_ns);
    f("bandwidth_bytes_per_ns", m.bandwidth_bytes_per_ns);
    f("atomic_ns", m.atomic_ns);
    f("eager_threshold_bytes", m.eager_threshold_bytes);
    f("dwq_pool_capacity", m.dwq_pool_capacity);
    f("stream_op_gap_ns", m.stream_op_gap_ns);
    f("poll_overhead_ns", m.poll_overhead_ns);
    f("gpu_copy_bytes_per_ns", m.gpu_copy_bytes_per_ns);
    f("life_cells_per_ns", m.life_cells_per_ns);
}

}  // namespace

SimTime CostModel::transfer_time(std::uint64_t len) const
{
    return wire_latency_ns + injection_time(len);
}

SimTime CostModel::injection_time(std::uint64_t len) const
{
    return ceil_div(len, bandwidth_bytes_per_ns);
}

SimTime CostModel::copy_time(std::uint64_t len) const
{
    return ceil_div(len, gpu_copy_bytes_per_ns);
}

SimTime CostModel::life_update_time(std::uint64_t cells) const
{
    return ceil_div(cells, life_cells_per_ns);
}

void CostModel::validate() const
{
    if (bandwidth_bytes_per_ns == 0)
    {
        throw std::invalid_argument("bandwidth_bytes_per_ns must be > 0");
    }
    if (gpu_copy_bytes_per_ns == 0)
    {
        throw std::invalid_argument("gpu_copy_bytes_per_ns must be > 0");
    }
    if (life_cells_per_ns == 0)
    {
        throw std::invalid_argument("life_cells_per_ns must be > 0");
    }
}

void CostModel::set(std::string_view key, std::string_view value)
{
    bool found = false;
    for_each_field(*this, [&](std::string_view name, std::uint64_t& field) {
        if (name != key)
        {
            return;
        }
        found              = true;
        std::uint64_t parsed = 0;
        auto [ptr, ec]     = std::from_chars(value.data(), value.data() + value.size(), parsed);
        if (ec != std::errc() || ptr != value.data() + value.size())
        {
            throw std::invalid_argument("cost model: bad value for " + std::string(key) + ": '" +
                                        std::string(value) + "'");
        }
        field = parsed;
    });
    if (!found)
    {
        throw std::invalid_argument("cost model: unknown key '" + std::string(key) + "'");
    }
}

CostModel CostModel::parse(std::string_view text)
{
    CostModel model;
    std::size_t line_no = 0;
    while (!text.empty())
    {
        auto             nl   = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text                  = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;

        if (auto hash = line.find('#'); hash != std::string_view::npos)
        {
            line = line.substr(0, hash);
        }
        line = trim(line);
        if (line.empty())
        {
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string_view::npos)
        {
            throw std::invalid_argument("cost model line " + std::to_string(line_no) +
                                        ": expected key=value");
        }
        model.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    model.validate();
    return model;
}

CostModel CostModel::load(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
    {
        throw std::runtime_error("cannot open cost model file: " + path);
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

void CostModel::write(std::ostream& out) const
{
    CostModel copy = *this;
    for_each_field(copy, [&](std::string_view name, std::uint64_t& field) {
        out << name << '=' << field << '\n';
    });
}

}  // namespace stsim
