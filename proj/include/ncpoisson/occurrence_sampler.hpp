#pragma once

#include <cstdint>
#include <vector>

#include "ncpoisson/rng.hpp"
#include "ncpoisson/subshift_model.hpp"

namespace ncp {

// Start positions t in [0, last_start] with x[t, t+m) in a set of m-blocks,
// for x drawn from a stationary Markov measure.
//
// An Aho-Corasick automaton over the blocks, paired with the last symbol read,
// is a Markov chain; occurrences are its visits to full-match states. The
// first-passage laws (time, match state) from the stationary start and from
// each match state are tabulated once, so a replicate costs one inverse-CDF
// draw per occurrence instead of one step per symbol.
class OccurrenceSampler {
 public:
  OccurrenceSampler(const MarkovGibbsMeasure& measure, const std::vector<Word>& blocks, Index last_start,
                    std::size_t memory_budget);

  Index block_length() const noexcept { return m_; }
  Index last_start() const noexcept { return last_end_ - m_ + 1; }

  // Appends occurrence starts in increasing order.
  void sample(Rng& rng, std::vector<Index>& starts) const;

  // Calls visit(start) for each occurrence in increasing order; stops early
  // when visit returns false.
  template <typename Visit>
  void sample_each(Rng& rng, Visit&& visit) const {
    Cursor c;
    Index start = 0;
    while (next(rng, c, start)) {
      if (!visit(start)) return;
    }
  }

 private:
  struct Cursor {
    std::size_t table = 0;
    Index now = 0;
    bool first = true;
  };
  bool next(Rng& rng, Cursor& c, Index& start) const;
  // First index in [0, count) of cdf_[table] whose value exceeds u, or count.
  std::size_t search(std::size_t table, std::size_t count, double u) const;

  Index m_;
  Index last_end_;
  std::size_t matches_ = 0;
  // cdf_[0]: first match from the stationary start, indexed by end time.
  // cdf_[1 + s]: next match after match state s, indexed by elapsed time.
  // Entry [t * matches_ + s'] is cumulative in (t, s').
  std::vector<std::vector<double>> cdf_;
  // Per-table geometric rate used to guess where a search should start.
  std::vector<double> rate_;
};

}  // namespace ncp
