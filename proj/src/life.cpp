#include <algorithm>
#include <array>
#include <cstring>
#include <map>
#include <ostream>
#include <random>
#include <stdexcept>

#include "stsim/bench.hpp"
#include "stsim/error.hpp"
#include "stsim/monitor.hpp"

namespace stsim
{

namespace
{

struct Offset
{
    int dr, dc;
};

constexpr std::array<Offset, direction_count> offsets{{
    {-1, 0},   // north
    {1, 0},    // south
    {0, 1},    // east
    {0, -1},   // west
    {-1, 1},   // north_east
    {-1, -1},  // north_west
    {1, 1},    // south_east
    {1, -1},   // south_west
}};

int wrap(int v, int n)
{
    return ((v % n) + n) % n;
}

}  // namespace

// -- boards ------------------------------------------------------------------

Board::Board(int size) : n(size), cells(static_cast<std::size_t>(size) * static_cast<std::size_t>(size), 0)
{
    if (size < 0)
    {
        throw std::invalid_argument("board size must be non-negative");
    }
}

Board glider_blinker(int n)
{
    if (n < 8)
    {
        throw std::invalid_argument("glider and blinker need a board of at least 8x8");
    }
    Board b(n);
    b.at(1, 2) = 1;
    b.at(2, 3) = 1;
    b.at(3, 1) = 1;
    b.at(3, 2) = 1;
    b.at(3, 3) = 1;
    int m = n / 2 + 1;
    b.at(m, m - 1) = 1;
    b.at(m, m)     = 1;
    b.at(m, m + 1) = 1;
    return b;
}

Board random_board(int n, std::uint64_t seed)
{
    Board           b(n);
    std::mt19937_64 rng(seed);
    for (auto& c : b.cells)
    {
        c = (rng() >> 32) % 100 < 30 ? 1 : 0;
    }
    return b;
}

Board life_oracle(Board board, int steps)
{
    const int        n = board.n;
    Board            next(n);
    std::vector<int> prev_of(static_cast<std::size_t>(n)), next_of(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
    {
        prev_of[static_cast<std::size_t>(i)] = wrap(i - 1, n);
        next_of[static_cast<std::size_t>(i)] = wrap(i + 1, n);
    }
    for (int s = 0; s < steps; ++s)
    {
        for (int r = 0; r < n; ++r)
        {
            int up   = prev_of[static_cast<std::size_t>(r)];
            int down = next_of[static_cast<std::size_t>(r)];
            for (int c = 0; c < n; ++c)
            {
                int left  = prev_of[static_cast<std::size_t>(c)];
                int right = next_of[static_cast<std::size_t>(c)];
                int alive = board.at(up, left) + board.at(up, c) + board.at(up, right) +
                            board.at(r, left) + board.at(r, right) + board.at(down, left) +
                            board.at(down, c) + board.at(down, right);
                next.at(r, c) = (alive == 3 || (alive == 2 && board.at(r, c))) ? 1 : 0;
            }
        }
        std::swap(board, next);
    }
    return board;
}

std::uint64_t board_digest(const Board& board)
{
    std::uint64_t h   = 1469598103934665603ull;
    auto          mix = [&h](std::uint8_t byte) {
        h ^= byte;
        h *= 1099511628211ull;
    };
    for (int i = 0; i < 4; ++i)
    {
        mix(static_cast<std::uint8_t>(static_cast<std::uint32_t>(board.n) >> (8 * i)));
    }
    for (std::uint8_t c : board.cells)
    {
        mix(c);
    }
    return h;
}

// -- halo pattern ------------------------------------------------------------

Direction opposite(Direction d)
{
    switch (d)
    {
    case north:
        return south;
    case south:
        return north;
    case east:
        return west;
    case west:
        return east;
    case north_east:
        return south_west;
    case north_west:
        return south_east;
    case south_east:
        return north_west;
    case south_west:
        return north_east;
    }
    throw std::invalid_argument("bad direction");
}

HaloPattern::HaloPattern(int n_, int rows_, int cols_, std::size_t cell_bytes_)
    : n(n_), rows(rows_), cols(cols_), local_rows(0), local_cols(0), cell_bytes(cell_bytes_)
{
    if (n <= 0 || rows <= 0 || cols <= 0 || cell_bytes == 0)
    {
        throw std::invalid_argument("board size, rank grid and cell size must be positive");
    }
    if (n % rows != 0 || n % cols != 0)
    {
        throw std::invalid_argument("board of " + std::to_string(n) + " cells does not divide into a " +
                                    std::to_string(rows) + "x" + std::to_string(cols) + " grid");
    }
    local_rows = n / rows;
    local_cols = n / cols;
}

int HaloPattern::neighbor(int rank, Direction d) const
{
    const Offset& o = offsets[static_cast<std::size_t>(d)];
    int           r = wrap(rank / cols + o.dr, rows);
    int           c = wrap(rank % cols + o.dc, cols);
    return r * cols + c;
}

std::size_t HaloPattern::cells(Direction d) const
{
    const Offset& o = offsets[static_cast<std::size_t>(d)];
    if (o.dr == 0)
    {
        return static_cast<std::size_t>(local_rows);
    }
    if (o.dc == 0)
    {
        return static_cast<std::size_t>(local_cols);
    }
    return 1;
}

std::size_t HaloPattern::max_message_bytes() const
{
    return static_cast<std::size_t>(std::max(local_rows, local_cols)) * cell_bytes;
}

// -- rank grid -------------------------------------------------------------

RankGrid::RankGrid(World& world, const HaloPattern& pattern, int rank)
    : world_(world), pattern_(pattern), rank_(rank), stream_(world.gpu.create_stream(rank))
{
    RankMemory&  m     = world_.fabric.memory(rank);
    std::size_t  cells = static_cast<std::size_t>(pattern.local_rows + 2) *
                        static_cast<std::size_t>(pattern.local_cols + 2);
    grid_ = m.allocate(cells * pattern.cell_bytes);
    for (int d = 0; d < direction_count; ++d)
    {
        send_.push_back(m.allocate(pattern.bytes(static_cast<Direction>(d))));
    }
    for (int d = 0; d < direction_count; ++d)
    {
        recv_.push_back(m.allocate(pattern.bytes(static_cast<Direction>(d))));
    }
}

RankGrid::Block RankGrid::owned(Direction d) const
{
    const Offset& o = offsets[static_cast<std::size_t>(d)];
    int           lr = pattern_.local_rows, lc = pattern_.local_cols;
    Block         b;
    b.row  = o.dr < 0 ? 1 : (o.dr > 0 ? lr : 1);
    b.rows = o.dr == 0 ? lr : 1;
    b.col  = o.dc < 0 ? 1 : (o.dc > 0 ? lc : 1);
    b.cols = o.dc == 0 ? lc : 1;
    return b;
}

RankGrid::Block RankGrid::ghost(Direction d) const
{
    const Offset& o = offsets[static_cast<std::size_t>(d)];
    int           lr = pattern_.local_rows, lc = pattern_.local_cols;
    Block         b;
    b.row  = o.dr < 0 ? 0 : (o.dr > 0 ? lr + 1 : 1);
    b.rows = o.dr == 0 ? lr : 1;
    b.col  = o.dc < 0 ? 0 : (o.dc > 0 ? lc + 1 : 1);
    b.cols = o.dc == 0 ? lc : 1;
    return b;
}

std::size_t RankGrid::cell_offset(int row, int col) const
{
    std::size_t stride = static_cast<std::size_t>(pattern_.local_cols + 2);
    return grid_.offset +
           (static_cast<std::size_t>(row) * stride + static_cast<std::size_t>(col)) *
               pattern_.cell_bytes;
}

void RankGrid::copy_block(const Block& b, std::size_t buffer, bool to_buffer)
{
    RankMemory&       m  = world_.fabric.memory(rank_);
    const std::size_t cb = pattern_.cell_bytes;
    std::size_t       at = buffer;
    for (int r = b.row; r < b.row + b.rows; ++r)
    {
        // Cells of one block row are contiguous in the grid.
        std::size_t len  = static_cast<std::size_t>(b.cols) * cb;
        auto        grid = m.bytes(cell_offset(r, b.col), len);
        auto        buf  = m.bytes(at, len);
        if (to_buffer)
        {
            std::copy(grid.begin(), grid.end(), buf.begin());
        }
        else
        {
            std::copy(buf.begin(), buf.end(), grid.begin());
        }
        at += len;
    }
}

void RankGrid::load(const Board& board)
{
    RankMemory& m  = world_.fabric.memory(rank_);
    int         r0 = (rank_ / pattern_.cols) * pattern_.local_rows;
    int         c0 = (rank_ % pattern_.cols) * pattern_.local_cols;
    for (int r = 0; r < pattern_.local_rows; ++r)
    {
        for (int c = 0; c < pattern_.local_cols; ++c)
        {
            auto cell = m.bytes(cell_offset(r + 1, c + 1), pattern_.cell_bytes);
            std::fill(cell.begin(), cell.end(), std::byte{0});
            cell[0] = static_cast<std::byte>(board.at(r0 + r, c0 + c));
        }
    }
}

void RankGrid::store(Board& board) const
{
    const RankMemory& m  = world_.fabric.memory(rank_);
    int               r0 = (rank_ / pattern_.cols) * pattern_.local_rows;
    int               c0 = (rank_ % pattern_.cols) * pattern_.local_cols;
    for (int r = 0; r < pattern_.local_rows; ++r)
    {
        for (int c = 0; c < pattern_.local_cols; ++c)
        {
            board.at(r0 + r, c0 + c) =
                static_cast<std::uint8_t>(m.bytes(cell_offset(r + 1, c + 1), 1)[0]);
        }
    }
}

void RankGrid::step()
{
    RankMemory&       m      = world_.fabric.memory(rank_);
    const int         lr     = pattern_.local_rows;
    const int         lc     = pattern_.local_cols;
    const std::size_t cb     = pattern_.cell_bytes;
    const std::size_t stride = static_cast<std::size_t>(lc + 2) * cb;
    auto              g      = m.bytes(grid_);
    auto alive = [&](int r, int c) {
        return static_cast<int>(g[static_cast<std::size_t>(r) * stride + static_cast<std::size_t>(c) * cb]);
    };
    scratch_.resize(static_cast<std::size_t>(lr) * static_cast<std::size_t>(lc));
    for (int r = 1; r <= lr; ++r)
    {
        for (int c = 1; c <= lc; ++c)
        {
            int sum = alive(r - 1, c - 1) + alive(r - 1, c) + alive(r - 1, c + 1) + alive(r, c - 1) +
                      alive(r, c + 1) + alive(r + 1, c - 1) + alive(r + 1, c) + alive(r + 1, c + 1);
            scratch_[static_cast<std::size_t>(r - 1) * static_cast<std::size_t>(lc) +
                     static_cast<std::size_t>(c - 1)] =
                (sum == 3 || (sum == 2 && alive(r, c) != 0)) ? 1 : 0;
        }
    }
    for (int r = 1; r <= lr; ++r)
    {
        for (int c = 1; c <= lc; ++c)
        {
            g[static_cast<std::size_t>(r) * stride + static_cast<std::size_t>(c) * cb] =
                static_cast<std::byte>(scratch_[static_cast<std::size_t>(r - 1) *
                                                    static_cast<std::size_t>(lc) +
                                                static_cast<std::size_t>(c - 1)]);
        }
    }
}

ComputeOp RankGrid::pack_op()
{
    std::size_t bytes = 0;
    for (const BufferRef& b : send_)
    {
        bytes += b.len;
    }
    ComputeOp op;
    op.duration = world_.cost.copy_time(bytes);
    op.label    = "pack";
    op.effect   = [this] {
        for (int d = 0; d < direction_count; ++d)
        {
            copy_block(owned(static_cast<Direction>(d)), send_[static_cast<std::size_t>(d)].offset,
                       true);
        }
    };
    return op;
}

ComputeOp RankGrid::unpack_op()
{
    std::size_t bytes = 0;
    for (const BufferRef& b : recv_)
    {
        bytes += b.len;
    }
    ComputeOp op;
    op.duration = world_.cost.copy_time(bytes);
    op.label    = "unpack";
    op.effect   = [this] {
        for (int d = 0; d < direction_count; ++d)
        {
            copy_block(ghost(static_cast<Direction>(d)), recv_[static_cast<std::size_t>(d)].offset,
                       false);
        }
    };
    return op;
}

ComputeOp RankGrid::compute_op()
{
    ComputeOp op;
    op.duration = world_.cost.life_update_time(static_cast<std::uint64_t>(pattern_.local_rows) *
                                               static_cast<std::uint64_t>(pattern_.local_cols));
    op.label    = "life";
    op.effect   = [this] { step(); };
    return op;
}

// -- stream halo -------------------------------------------------------------

StreamHalo::StreamHalo(World& world, const HaloPattern& pattern, RankGrid& grid, bool ready_sends)
    : world_(world), grid_(grid)
{
    const int    rank = grid.rank();
    Communicator comm = world.mpi.world();
    queue_            = world.st.queue_init(QueueKind::cxi, grid.stream());
    for (int i = 0; i < direction_count; ++i)
    {
        auto d = static_cast<Direction>(i);
        recvs_.push_back(world.mpi.recv_init(rank, grid.recv_buffer(d), pattern.neighbor(rank, d),
                                             opposite(d), comm));
    }
    for (int i = 0; i < direction_count; ++i)
    {
        auto d = static_cast<Direction>(i);
        sends_.push_back(world.mpi.send_init(rank, grid.send_buffer(d), pattern.neighbor(rank, d), d,
                                             comm, ready_sends));
    }
    all_ = recvs_;
    all_.insert(all_.end(), sends_.begin(), sends_.end());
}

StreamHalo::~StreamHalo()
{
    if (queue_ != nullptr && queue_->outstanding() == 0)
    {
        for (Request* r : all_)
        {
            world_.mpi.request_free(r);
        }
        world_.st.queue_free(queue_);
    }
}

Task<> StreamHalo::match()
{
    co_await world_.mpi.match_all(all_);
}

Task<> StreamHalo::enqueue_gather()
{
    co_await world_.st.enqueue_start_all(queue_, recvs_);
    world_.gpu.enqueue(grid_.stream(), grid_.pack_op());
    co_await world_.st.enqueue_start_all(queue_, sends_);
    world_.st.enqueue_wait_all(queue_);
    world_.gpu.enqueue(grid_.stream(), grid_.unpack_op());
}

// -- Game of Life ------------------------------------------------------------

namespace
{

struct LifeState
{
    LifeState(World& world, const HaloPattern& hp, int n) : w(world), pattern(hp), steps(n) {}

    World&                                   w;
    const HaloPattern&                       pattern;
    int                                      steps;
    ProtocolMonitor*                         monitor = nullptr;
    std::vector<std::unique_ptr<RankGrid>>   grids;
    std::vector<std::unique_ptr<StreamHalo>> halos;
    SimTime                                  finish = 0;
};

Task<> baseline_life(LifeState& s, int rank)
{
    World&       w    = s.w;
    RankGrid&    g    = *s.grids[static_cast<std::size_t>(rank)];
    Communicator comm = w.mpi.world();
    for (int step = 0; step < s.steps; ++step)
    {
        w.gpu.enqueue(g.stream(), g.pack_op());
        co_await w.gpu.synchronize(g.stream());
        std::vector<Request*> reqs;
        for (int i = 0; i < direction_count; ++i)
        {
            auto d = static_cast<Direction>(i);
            reqs.push_back(w.mpi.irecv(rank, g.recv_buffer(d), s.pattern.neighbor(rank, d),
                                       opposite(d), comm));
        }
        for (int i = 0; i < direction_count; ++i)
        {
            auto d = static_cast<Direction>(i);
            reqs.push_back(w.mpi.isend(rank, g.send_buffer(d), s.pattern.neighbor(rank, d), d, comm));
        }
        co_await w.mpi.wait_all(reqs);
        w.gpu.enqueue(g.stream(), g.unpack_op());
        w.gpu.enqueue(g.stream(), g.compute_op());
    }
    co_await w.gpu.synchronize(g.stream());
    s.finish = std::max(s.finish, w.sim.now());
}

Task<> st_life(LifeState& s, int rank)
{
    World&      w    = s.w;
    RankGrid&   g    = *s.grids[static_cast<std::size_t>(rank)];
    StreamHalo& halo = *s.halos[static_cast<std::size_t>(rank)];
    co_await halo.match();
    if (s.monitor != nullptr)
    {
        for (Request* r : halo.requests())
        {
            s.monitor->track(static_cast<PersistentRequest*>(r));
        }
    }
    for (int step = 0; step < s.steps; ++step)
    {
        co_await halo.enqueue_gather();
        w.gpu.enqueue(g.stream(), g.compute_op());
    }
    co_await w.st.queue_wait(halo.queue());
    s.finish = std::max(s.finish, w.sim.now());
}

}  // namespace

LifeRun run_game_of_life(const Board& initial, const LifeConfig& config, const CostModel& cost,
                         std::ostream* trace)
{
    if (config.steps < 0)
    {
        throw std::invalid_argument("step count must be non-negative");
    }
    HaloPattern pattern(initial.n, config.rows, config.cols, config.cell_bytes);
    World       w(pattern.ranks(), cost);
    w.sim.enable_trace(trace != nullptr);
    ProtocolMonitor monitor(w);

    LifeState s(w, pattern, config.steps);
    s.monitor = &monitor;
    for (int r = 0; r < pattern.ranks(); ++r)
    {
        s.grids.push_back(std::make_unique<RankGrid>(w, pattern, r));
        s.grids.back()->load(initial);
        if (config.backend != Backend::baseline)
        {
            s.halos.push_back(std::make_unique<StreamHalo>(w, pattern, *s.grids.back(),
                                                           config.backend == Backend::st_rsend));
        }
    }
    for (int r = 0; r < pattern.ranks(); ++r)
    {
        if (config.backend == Backend::baseline)
        {
            w.sim.spawn(r, [&s, r]() { return baseline_life(s, r); });
        }
        else
        {
            w.sim.spawn(r, [&s, r]() { return st_life(s, r); });
        }
    }
    RunOutcome out = w.sim.run_until_quiescent();
    if (!out.completed())
    {
        throw std::runtime_error("Life run did not complete:\n" + out.report());
    }
    monitor.finish();
    std::string title = std::string("life ") + backend_name(config.backend) + " " +
                        std::to_string(config.rows) + "x" + std::to_string(config.cols);
    if (trace != nullptr)
    {
        *trace << "# " << title << '\n';
        w.sim.write_trace(*trace);
    }

    LifeRun run;
    run.board = Board(initial.n);
    for (const auto& g : s.grids)
    {
        g->store(run.board);
    }
    run.digest              = board_digest(run.board);
    run.solve_ns            = s.finish;
    run.ready_violations    = monitor.counts().early_receive_writes;
    run.protocol_violations = monitor.counts().total();
    s.halos.clear();

    BenchResult& r = run.result;
    r.backend      = backend_name(config.backend);
    r.size_bytes   = static_cast<std::uint64_t>(initial.n) * static_cast<std::uint64_t>(initial.n) *
                   config.cell_bytes;
    r.ranks        = pattern.ranks();
    r.iterations   = static_cast<std::uint64_t>(std::max(config.steps, 1));
    r.mean_ns      = static_cast<double>(run.solve_ns) / static_cast<double>(r.iterations);
    r.metrics      = {{"solve_ns", static_cast<double>(run.solve_ns)},
                      {"max_message_bytes", static_cast<double>(pattern.max_message_bytes())},
                      {"ready_violations", static_cast<double>(run.ready_violations)}};
    return run;
}

// -- strong scaling ------------------------------------------------------------

std::vector<SweepPoint> run_scaling_sweep(const SweepConfig& config, const CostModel& cost,
                                          std::ostream* trace)
{
    Board         initial = random_board(config.n, config.seed);
    std::uint64_t oracle  = board_digest(life_oracle(initial, config.steps));

    std::vector<SweepPoint> points;
    for (const auto& [rows, cols] : config.grids)
    {
        for (Backend backend : config.backends)
        {
            LifeConfig lc;
            lc.backend    = backend;
            lc.rows       = rows;
            lc.cols       = cols;
            lc.steps      = config.steps;
            lc.cell_bytes = config.cell_bytes;
            LifeRun run   = run_game_of_life(initial, lc, cost, trace);
            if (run.digest != oracle)
            {
                throw std::runtime_error(std::string("Life digest mismatch for ") +
                                         backend_name(backend) + " on " + std::to_string(rows) +
                                         "x" + std::to_string(cols));
            }
            HaloPattern hp(config.n, rows, cols, config.cell_bytes);
            points.push_back(SweepPoint{backend, rows, cols, run.solve_ns, 0.0,
                                        hp.max_message_bytes(), run.digest, run.ready_violations});
        }
    }

    // Reference: the single-rank baseline, run separately if the grid list
    // does not include it.
    SimTime reference = 0;
    for (const SweepPoint& p : points)
    {
        if (p.backend == Backend::baseline && p.rows * p.cols == 1)
        {
            reference = p.solve_ns;
        }
    }
    if (reference == 0)
    {
        LifeConfig lc;
        lc.steps      = config.steps;
        lc.cell_bytes = config.cell_bytes;
        reference     = run_game_of_life(initial, lc, cost).solve_ns;
    }
    for (SweepPoint& p : points)
    {
        p.speedup = p.solve_ns == 0 ? 0.0
                                    : static_cast<double>(reference) / static_cast<double>(p.solve_ns);
    }
    return points;
}

std::vector<BenchResult> sweep_results(const SweepConfig& config, const std::vector<SweepPoint>& points)
{
    std::vector<BenchResult> out;
    for (const SweepPoint& p : points)
    {
        BenchResult r;
        r.backend    = backend_name(p.backend);
        r.size_bytes = static_cast<std::uint64_t>(config.n) * static_cast<std::uint64_t>(config.n) *
                       config.cell_bytes;
        r.ranks      = p.rows * p.cols;
        r.iterations = static_cast<std::uint64_t>(std::max(config.steps, 1));
        r.mean_ns    = static_cast<double>(p.solve_ns) / static_cast<double>(r.iterations);
        r.metrics    = {{"solve_ns", static_cast<double>(p.solve_ns)},
                        {"speedup", p.speedup},
                        {"max_message_bytes", static_cast<double>(p.max_message_bytes)},
                        {"ready_violations", static_cast<double>(p.ready_violations)}};
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace stsim
