#include "reviewguard/split.hpp"

#include "reviewguard/errors.hpp"
#include "reviewguard/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include <fmt/core.h>

namespace reviewguard {

namespace {

std::array<std::vector<std::size_t>, kNumClasses> by_class(std::span<const Label> labels) {
    std::array<std::vector<std::size_t>, kNumClasses> out;
    for (std::size_t i = 0; i < labels.size(); ++i) out[class_index(labels[i])].push_back(i);
    return out;
}

void require_both_classes(const std::array<std::vector<std::size_t>, kNumClasses>& groups) {
    for (int c = 0; c < kNumClasses; ++c) {
        if (groups[c].empty())
            throw DataError(fmt::format("class '{}' is absent, cannot split", to_string(label_from_index(c))));
    }
}

} // namespace

HoldoutSplit holdout_split(std::span<const Label> labels, double test_fraction, std::uint64_t seed, bool stratified) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw UsageError("test fraction must be in (0, 1)");
    const std::size_t n = labels.size();
    if (n < 2) throw DataError("holdout split needs at least 2 records");
    auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_fraction));
    n_test = std::clamp<std::size_t>(n_test, 1, n - 1);

    std::vector<std::vector<std::size_t>> groups;
    if (stratified) {
        auto g = by_class(labels);
        require_both_classes(g);
        groups.assign(g.begin(), g.end());
    } else {
        groups.emplace_back(n);
        std::iota(groups[0].begin(), groups[0].end(), 0);
    }

    // Largest remainder apportionment of n_test over the groups.
    std::vector<std::size_t> quota(groups.size());
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const double exact = static_cast<double>(n_test) * static_cast<double>(groups[g].size()) / static_cast<double>(n);
        quota[g] = static_cast<std::size_t>(std::floor(exact));
        assigned += quota[g];
        remainders.emplace_back(exact - std::floor(exact), g);
    }
    std::stable_sort(remainders.begin(), remainders.end(), [](auto& a, auto& b) { return a.first > b.first; });
    for (std::size_t r = 0; assigned < n_test; ++r, ++assigned) ++quota[remainders[r % remainders.size()].second];

    HoldoutSplit s;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        Rng rng(derive_seed(seed, g));
        rng.shuffle(std::span<std::size_t>(groups[g]));
        const std::size_t q = std::min(quota[g], groups[g].size());
        s.test.insert(s.test.end(), groups[g].begin(), groups[g].begin() + static_cast<std::ptrdiff_t>(q));
        s.train.insert(s.train.end(), groups[g].begin() + static_cast<std::ptrdiff_t>(q), groups[g].end());
    }
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.test.begin(), s.test.end());
    return s;
}

std::vector<std::vector<std::size_t>> kfold_split(std::span<const Label> labels, std::size_t k, std::uint64_t seed,
                                                  bool stratified) {
    if (k < 2) throw UsageError("k-fold needs k >= 2");
    if (labels.size() < k) throw DataError(fmt::format("{} records cannot fill {} folds", labels.size(), k));
    std::vector<std::vector<std::size_t>> groups;
    if (stratified) {
        auto g = by_class(labels);
        require_both_classes(g);
        groups.assign(g.begin(), g.end());
    } else {
        groups.emplace_back(labels.size());
        std::iota(groups[0].begin(), groups[0].end(), 0);
    }
    std::vector<std::vector<std::size_t>> folds(k);
    std::size_t next = 0;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        Rng rng(derive_seed(seed, g));
        rng.shuffle(std::span<std::size_t>(groups[g]));
        for (std::size_t i : groups[g]) {
            folds[next].push_back(i);
            next = (next + 1) % k;
        }
    }
    for (auto& f : folds) std::sort(f.begin(), f.end());
    return folds;
}

std::vector<std::size_t> fold_complement(const std::vector<std::vector<std::size_t>>& folds, std::size_t f) {
    std::vector<std::size_t> out;
    for (std::size_t g = 0; g < folds.size(); ++g)
        if (g != f) out.insert(out.end(), folds[g].begin(), folds[g].end());
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace reviewguard
