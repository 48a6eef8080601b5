#include <cstdint>
#include <fstream>
#include <iostream>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "stsim/bench.hpp"

using namespace stsim;

namespace
{

std::uint64_t parse_size(const std::string& text)
{
    std::size_t   used  = 0;
    std::uint64_t value = std::stoull(text, &used);
    std::string   unit  = text.substr(used);
    if (unit.empty() || unit == "B")
    {
        return value;
    }
    if (unit == "K" || unit == "KiB")
    {
        return value << 10;
    }
    if (unit == "M" || unit == "MiB")
    {
        return value << 20;
    }
    if (unit == "G" || unit == "GiB")
    {
        return value << 30;
    }
    throw std::invalid_argument("bad size '" + text + "'");
}

std::pair<int, int> parse_grid(const std::string& text)
{
    auto x = text.find('x');
    if (x == std::string::npos)
    {
        throw std::invalid_argument("grid must look like RxC, got '" + text + "'");
    }
    return {std::stoi(text.substr(0, x)), std::stoi(text.substr(x + 1))};
}

/// Powers of two from 32 B to 16 MiB.
std::vector<std::string> default_sizes()
{
    std::vector<std::string> out;
    for (std::uint64_t s = 32; s <= (16u << 20); s *= 2)
    {
        out.push_back(std::to_string(s));
    }
    return out;
}

struct Options
{
    std::vector<std::string> backends{"baseline", "st-send", "st-rsend"};
    std::vector<std::string> sizes = default_sizes();
    std::vector<std::string> grids;
    std::uint64_t            iterations = 0;
    int                      steps      = 10;
    int                      board      = 0;
    std::string              pattern    = "random";
    std::size_t              cell_bytes = 8;
    std::string              cost_model;
    std::string              csv;
    std::string              trace;
    std::uint64_t            seed = 1;
};

class Output
{
public:
    Output(const std::string& path, std::ostream& fallback) : out_(&fallback)
    {
        if (!path.empty())
        {
            file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
            if (!*file_)
            {
                throw std::runtime_error("cannot open " + path);
            }
            out_ = file_.get();
        }
    }
    std::ostream& stream()
    {
        return *out_;
    }

private:
    std::unique_ptr<std::ofstream> file_;
    std::ostream*                  out_;
};

std::vector<Backend> backends(const Options& o)
{
    std::vector<Backend> out;
    for (const auto& b : o.backends)
    {
        out.push_back(parse_backend(b));
    }
    return out;
}

int pingpong(const Options& o, const CostModel& cost)
{
    Output                   csv(o.csv, std::cout);
    std::unique_ptr<Output>  trace = o.trace.empty() ? nullptr : std::make_unique<Output>(o.trace, std::cout);
    std::vector<BenchResult> results;
    for (Backend b : backends(o))
    {
        for (const auto& s : o.sizes)
        {
            std::uint64_t size = parse_size(s);
            std::uint64_t n    = o.iterations != 0 ? o.iterations : default_iterations(size);
            results.push_back(
                run_pingpong(b, size, n, cost, trace ? &trace->stream() : nullptr).result);
        }
    }
    write_csv(csv.stream(), results);
    return 0;
}

int life(const Options& o, const CostModel& cost)
{
    int   n       = o.board != 0 ? o.board : 64;
    Board initial = o.pattern == "glider-blinker" ? glider_blinker(n) : random_board(n, o.seed);
    if (o.pattern != "glider-blinker" && o.pattern != "random")
    {
        throw std::invalid_argument("pattern must be glider-blinker or random");
    }
    std::uint64_t oracle = board_digest(life_oracle(initial, o.steps));
    auto [rows, cols]    = parse_grid(o.grids.empty() ? "1x1" : o.grids.front());

    Output                   csv(o.csv, std::cout);
    std::unique_ptr<Output>  trace = o.trace.empty() ? nullptr : std::make_unique<Output>(o.trace, std::cout);
    std::vector<BenchResult> results;
    int                      status = 0;
    for (Backend b : backends(o))
    {
        LifeConfig config;
        config.backend    = b;
        config.rows       = rows;
        config.cols       = cols;
        config.steps      = o.steps;
        config.cell_bytes = o.cell_bytes;
        LifeRun run = run_game_of_life(initial, config, cost, trace ? &trace->stream() : nullptr);
        bool    ok  = run.digest == oracle;
        run.result.metrics.emplace_back("digest_matches_oracle", ok ? 1.0 : 0.0);
        results.push_back(run.result);
        std::cerr << backend_name(b) << ' ' << rows << 'x' << cols << " digest " << std::hex
                  << run.digest << std::dec << (ok ? " ok" : " MISMATCH") << '\n';
        status = ok ? status : 1;
    }
    write_csv(csv.stream(), results);
    return status;
}

int sweep(const Options& o, const CostModel& cost)
{
    SweepConfig config;
    config.n          = o.board != 0 ? o.board : config.n;
    config.steps      = o.steps;
    config.cell_bytes = o.cell_bytes;
    config.seed       = o.seed;
    config.backends   = backends(o);
    if (!o.grids.empty())
    {
        config.grids.clear();
        for (const auto& g : o.grids)
        {
            config.grids.push_back(parse_grid(g));
        }
    }
    Output                  csv(o.csv, std::cout);
    std::unique_ptr<Output> trace = o.trace.empty() ? nullptr : std::make_unique<Output>(o.trace, std::cout);
    auto points = run_scaling_sweep(config, cost, trace ? &trace->stream() : nullptr);
    write_csv(csv.stream(), sweep_results(config, points));
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Stream-triggered MPI simulator benchmarks"};
    app.require_subcommand(1);
    Options o;

    auto common = [&o](CLI::App* sub) {
        sub->add_option("--backend", o.backends, "baseline, st-send or st-rsend (repeatable)")
            ->check(CLI::IsMember({"baseline", "st-send", "st-rsend"}))
            ->delimiter(',');
        sub->add_option("--cost-model", o.cost_model, "key=value cost model file")
            ->check(CLI::ExistingFile);
        sub->add_option("--csv", o.csv, "write CSV here instead of stdout");
        sub->add_option("--trace", o.trace, "write the event trace here");
        sub->add_option("--seed", o.seed, "seed for random boards");
    };

    CLI::App* pp = app.add_subcommand("pingpong", "two-rank ping-pong latency and bandwidth");
    common(pp);
    pp->add_option("--sizes", o.sizes, "message sizes, e.g. 32,4K,8M")->delimiter(',');
    pp->add_option("--iterations", o.iterations, "override the per-size iteration count");

    CLI::App* lf = app.add_subcommand("life", "Game of Life halo exchange, checked against the oracle");
    common(lf);
    lf->add_option("--grid", o.grids, "rank grid RxC")->expected(1);
    lf->add_option("--steps", o.steps, "generations")->check(CLI::NonNegativeNumber);
    lf->add_option("--board", o.board, "board side in cells (default 64)");
    lf->add_option("--pattern", o.pattern, "glider-blinker or random")
        ->check(CLI::IsMember({"glider-blinker", "random"}));
    lf->add_option("--cell-bytes", o.cell_bytes, "bytes per cell on the wire");

    CLI::App* sw = app.add_subcommand("sweep", "strong-scaling sweep over rank grids");
    common(sw);
    sw->add_option("--grid", o.grids, "rank grids RxC (repeatable)")->delimiter(',');
    sw->add_option("--steps", o.steps, "generations")->check(CLI::NonNegativeNumber);
    sw->add_option("--board", o.board, "board side in cells (default 2048)");
    sw->add_option("--cell-bytes", o.cell_bytes, "bytes per cell on the wire");

    CLI11_PARSE(app, argc, argv);

    try
    {
        CostModel cost = o.cost_model.empty() ? CostModel{} : CostModel::load(o.cost_model);
        if (pp->parsed())
        {
            return pingpong(o, cost);
        }
        if (lf->parsed())
        {
            return life(o, cost);
        }
        return sweep(o, cost);
    }
    catch (const std::exception& e)
    {
        std::cerr << "bench: " << e.what() << '\n';
        return 2;
    }
}
