#ifndef STSIM_BENCH_HPP
#define STSIM_BENCH_HPP

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "stsim/cost_model.hpp"
#include "stsim/world.hpp"

namespace stsim
{

enum class Backend
{
    baseline,
    st_send,
    st_rsend,
};

const char* backend_name(Backend backend);
/// Accepts "baseline", "st-send" and "st-rsend".
Backend     parse_backend(std::string_view name);

struct BenchResult
{
    std::string   backend;
    std::uint64_t size_bytes = 0;
    int           ranks      = 0;
    std::uint64_t iterations = 0;
    double        mean_ns    = 0;
    std::vector<std::pair<std::string, double>> metrics;

    double metric(std::string_view name) const;
};

/// Header plus one `backend,size_bytes,ranks,iterations,mean_ns,metric,value`
/// row per metric.
void write_csv(std::ostream& out, const std::vector<BenchResult>& results);

// -- ping-pong ---------------------------------------------------------------

/// 1000 below 4 MiB, 100 up to 64 MiB, 10 above.
std::uint64_t default_iterations(std::uint64_t size);

/// Closed-form virtual time of one steady-state hop (half a round trip).
SimTime pingpong_hop_ns(Backend backend, const CostModel& cost, std::uint64_t size);

struct PingPongRun
{
    BenchResult result;
    /// Virtual time from program start until both ranks finished.
    SimTime     total_ns = 0;
};

/// Two ranks bounce a `size`-byte buffer `iterations` times. Throws
/// std::runtime_error if a payload comes back altered.
PingPongRun run_pingpong(Backend backend, std::uint64_t size, std::uint64_t iterations,
                         const CostModel& cost = {}, std::ostream* trace = nullptr);

std::vector<BenchResult> run_pingpong(Backend backend, const std::vector<std::uint64_t>& sizes,
                                      const CostModel& cost = {}, std::uint64_t iterations = 0);

// -- Game of Life ----------------------------------------------------------

/// Square periodic board, one byte per cell (0 dead, 1 alive), row-major.
struct Board
{
    int                       n = 0;
    std::vector<std::uint8_t> cells;

    explicit Board(int size = 0);
    std::uint8_t& at(int r, int c)
    {
        return cells[static_cast<std::size_t>(r) * static_cast<std::size_t>(n) +
                     static_cast<std::size_t>(c)];
    }
    std::uint8_t at(int r, int c) const
    {
        return cells[static_cast<std::size_t>(r) * static_cast<std::size_t>(n) +
                     static_cast<std::size_t>(c)];
    }
    bool operator==(const Board&) const = default;
};

/// A glider near the top-left corner and a blinker near the centre.
Board glider_blinker(int n);
Board random_board(int n, std::uint64_t seed);
/// Sequential reference: `steps` generations on the torus.
Board life_oracle(Board board, int steps);
/// FNV-1a over the side length and the cells.
std::uint64_t board_digest(const Board& board);

enum Direction : int
{
    north,
    south,
    east,
    west,
    north_east,
    north_west,
    south_east,
    south_west,
};
constexpr int direction_count = 8;
Direction     opposite(Direction d);

/// Periodic R x C rank grid over an N x N board with a one-cell halo.
struct HaloPattern
{
    HaloPattern(int n, int rows, int cols, std::size_t cell_bytes = 8);

    int         n;
    int         rows;
    int         cols;
    int         local_rows;
    int         local_cols;
    std::size_t cell_bytes;

    int ranks() const
    {
        return rows * cols;
    }
    int neighbor(int rank, Direction d) const;
    /// Cells exchanged toward `d`: an edge length or 1 for corners.
    std::size_t cells(Direction d) const;
    std::size_t bytes(Direction d) const
    {
        return cells(d) * cell_bytes;
    }
    std::size_t max_message_bytes() const;
};

/// One rank's share of the board in simulated device memory: the subdomain
/// with its ghost ring, plus one send and one receive buffer per direction.
class RankGrid
{
public:
    RankGrid(World& world, const HaloPattern& pattern, int rank);

    int rank() const
    {
        return rank_;
    }
    StreamId stream() const
    {
        return stream_;
    }
    const BufferRef& send_buffer(Direction d) const
    {
        return send_[static_cast<std::size_t>(d)];
    }
    const BufferRef& recv_buffer(Direction d) const
    {
        return recv_[static_cast<std::size_t>(d)];
    }

    /// Copies this rank's block of `board` into the interior.
    void load(const Board& board);
    /// Copies the interior back into its block of `board`.
    void store(Board& board) const;

    /// Stream kernels: owned edges into send buffers, receive buffers into
    /// the ghost ring, and one Life generation over the interior.
    ComputeOp pack_op();
    ComputeOp unpack_op();
    ComputeOp compute_op();

private:
    struct Block
    {
        int row, col, rows, cols;
    };
    Block       owned(Direction d) const;
    Block       ghost(Direction d) const;
    std::size_t cell_offset(int row, int col) const;
    void        copy_block(const Block& b, std::size_t buffer, bool to_buffer);
    void        step();

    World&                   world_;
    const HaloPattern&       pattern_;
    int                      rank_;
    StreamId                 stream_;
    BufferRef                grid_;
    std::vector<BufferRef>   send_;
    std::vector<BufferRef>   recv_;
    std::vector<std::uint8_t> scratch_;
};

/// Stream-triggered halo exchange for one rank: eight persistent receives
/// and eight persistent sends on one queue, matched once up front.
class StreamHalo
{
public:
    StreamHalo(World& world, const HaloPattern& pattern, RankGrid& grid, bool ready_sends);
    ~StreamHalo();

    StreamHalo(const StreamHalo&)            = delete;
    StreamHalo& operator=(const StreamHalo&) = delete;

    /// Matches all sixteen requests. Must finish before the first gather.
    Task<> match();
    /// Receive starts, pack, send starts, wait on everything, unpack.
    Task<> enqueue_gather();

    StQueue* queue() const
    {
        return queue_;
    }
    const std::vector<Request*>& requests() const
    {
        return all_;
    }

private:
    World&                world_;
    RankGrid&             grid_;
    StQueue*              queue_ = nullptr;
    std::vector<Request*> recvs_;
    std::vector<Request*> sends_;
    std::vector<Request*> all_;
};

struct LifeConfig
{
    Backend     backend    = Backend::baseline;
    int         rows       = 1;
    int         cols       = 1;
    int         steps      = 1;
    std::size_t cell_bytes = 8;
};

struct LifeRun
{
    Board         board;
    std::uint64_t digest   = 0;
    SimTime       solve_ns = 0;
    /// Ready-mode data that reached a receive before its start executed.
    std::uint64_t ready_violations = 0;
    /// All protocol violations seen by the monitor, ready ones included.
    std::uint64_t protocol_violations = 0;
    BenchResult   result;
};

LifeRun run_game_of_life(const Board& initial, const LifeConfig& config,
                         const CostModel& cost = {}, std::ostream* trace = nullptr);

// -- strong scaling ------------------------------------------------------------

struct SweepConfig
{
    int                              n          = 2048;
    int                              steps      = 10;
    std::size_t                      cell_bytes = 8;
    std::uint64_t                    seed       = 1;
    std::vector<std::pair<int, int>> grids{{1, 1}, {2, 1}, {2, 2}, {4, 2}, {4, 4}, {8, 4}, {8, 8}};
    std::vector<Backend>             backends{Backend::baseline, Backend::st_send, Backend::st_rsend};
};

struct SweepPoint
{
    Backend       backend;
    int           rows;
    int           cols;
    SimTime       solve_ns;
    double        speedup;
    std::size_t   max_message_bytes;
    std::uint64_t digest;
    std::uint64_t ready_violations;
};

/// Runs every grid under every backend on a random board and checks each
/// digest against the sequential oracle (std::runtime_error on mismatch).
/// Speedups are relative to the 1x1 baseline run.
std::vector<SweepPoint> run_scaling_sweep(const SweepConfig& config, const CostModel& cost = {},
                                          std::ostream* trace = nullptr);

std::vector<BenchResult> sweep_results(const SweepConfig& config,
                                       const std::vector<SweepPoint>& points);

}  // namespace stsim

#endif
