#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "iqa/dataset.hpp"

namespace iqa {

struct TrainTestSplit {
  Dataset train;
  Dataset test;
};

/// Seeded uniform permutation, then the first round(n * test_fraction)
/// (at least 1) rows become the test set. Row order within each part follows
/// the permutation.
TrainTestSplit split_dataset(const Dataset& dataset, double test_fraction, std::uint64_t seed);

/// Fisher-Yates permutation of 0..n-1.
std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed);

Dataset subset(const Dataset& dataset, const std::vector<std::size_t>& rows);

}  // namespace iqa
