#pragma once

#include <cstddef>
#include <functional>
#include <memory>

namespace lpbf
{

/// Fixed-size worker pool for row-parallel kernels. Work is split into
/// contiguous ranges and every element is computed independently, so results
/// do not depend on the thread count.
class Parallel
{
public:
  explicit Parallel(int threads = 1);
  ~Parallel();
  Parallel(Parallel &&) noexcept;
  Parallel &operator=(Parallel &&) noexcept;

  int threads() const { return _threads; }

  // Calls fn(begin, end) over disjoint ranges covering [0, n).
  void for_ranges(std::size_t n,
                  std::function<void(std::size_t, std::size_t)> const &fn,
                  std::size_t grain = 16384) const;

private:
  struct Arena;
  int _threads = 1;
  std::unique_ptr<Arena> _arena;
};

} // namespace lpbf
