#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "reviewguard/corpus.hpp"

namespace reviewguard {

struct HoldoutSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

// Test size is round(n * test_fraction). With stratification the test rows
// are allotted to classes by largest remainder, so each class keeps its
// share within one record. Indices come back sorted.
HoldoutSplit holdout_split(std::span<const Label> labels, double test_fraction, std::uint64_t seed,
                           bool stratified = true);

// k disjoint folds covering 0..n-1, sizes within one of each other. With
// stratification each class is shuffled and dealt round-robin, continuing
// the deal across classes. Indices within a fold are sorted.
std::vector<std::vector<std::size_t>> kfold_split(std::span<const Label> labels, std::size_t k, std::uint64_t seed,
                                                  bool stratified = true);

// Complement of fold `f`, sorted.
std::vector<std::size_t> fold_complement(const std::vector<std::vector<std::size_t>>& folds, std::size_t f);

} // namespace reviewguard
