#include "iqa/split.hpp"

#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "iqa/error.hpp"
#include "iqa/rng.hpp"

namespace iqa {

std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.index(i)]);
  return idx;
}

Dataset subset(const Dataset& dataset, const std::vector<std::size_t>& rows) {
  Dataset out;
  out.schema = dataset.schema;
  out.provenance = dataset.provenance;
  out.samples.reserve(rows.size());
  for (std::size_t r : rows) out.samples.push_back(dataset.samples.at(r));
  return out;
}

TrainTestSplit split_dataset(const Dataset& dataset, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw Error("invalid_argument", fmt::format("test fraction {} must lie strictly between 0 and 1", test_fraction));
  const std::size_t n = dataset.size();
  if (n < 2) throw Error("invalid_argument", fmt::format("dataset of {} samples is too small to split", n));
  auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_fraction));
  n_test = std::clamp<std::size_t>(n_test, 1, n - 1);

  const auto perm = permutation(n, seed);
  std::vector<std::size_t> test_rows(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::size_t> train_rows(perm.begin() + static_cast<std::ptrdiff_t>(n_test), perm.end());
  return {subset(dataset, train_rows), subset(dataset, test_rows)};
}

}  // namespace iqa
