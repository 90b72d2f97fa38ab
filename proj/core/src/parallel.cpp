#include <lpbf/parallel.hpp>

#include <tbb/blocked_range.h>
#include <tbb/parallel_for.h>
#include <tbb/partitioner.h>
#include <tbb/task_arena.h>

#include <algorithm>

namespace lpbf
{

struct Parallel::Arena
{
  explicit Arena(int threads) : arena(threads) {}
  tbb::task_arena arena;
};

Parallel::Parallel(int threads) : _threads(std::max(1, threads))
{
  if (_threads > 1)
    _arena = std::make_unique<Arena>(_threads);
}

Parallel::~Parallel() = default;
Parallel::Parallel(Parallel &&) noexcept = default;
Parallel &Parallel::operator=(Parallel &&) noexcept = default;

void Parallel::for_ranges(
    std::size_t n, std::function<void(std::size_t, std::size_t)> const &fn,
    std::size_t grain) const
{
  if (n == 0)
    return;
  if (!_arena || n <= grain)
  {
    fn(0, n);
    return;
  }
  _arena->arena.execute([&] {
    tbb::parallel_for(
        tbb::blocked_range<std::size_t>(0, n, grain),
        [&](tbb::blocked_range<std::size_t> const &r) { fn(r.begin(), r.end()); },
        tbb::static_partitioner());
  });
}

} // namespace lpbf
