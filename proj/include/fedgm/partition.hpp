#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "fedgm/problems.hpp"

namespace fedgm {

struct PartitionConfig {
    double alpha = 0.5;  // Dirichlet concentration
    std::size_t n_clients = 1;
    std::size_t labels = 1;
    std::size_t samples_per_label = 1;
    std::uint64_t seed = 0;

    void validate() const;
};

/// counts[label][client] = number of samples of `label` given to `client`.
struct Partition {
    std::vector<std::vector<std::size_t>> counts;

    std::size_t n_clients() const { return counts.empty() ? 0 : counts.front().size(); }
    std::size_t labels() const { return counts.size(); }
    std::size_t client_total(std::size_t client) const;
};

/// Label-wise Dirichlet(alpha) proportions, rounded with the largest-remainder
/// method, then repaired so no client is left empty.
Partition draw_partition(const PartitionConfig& cfg);

/// Proportions drawn from Dirichlet(alpha, ..., alpha) via normalised Gamma draws.
std::vector<double> sample_dirichlet(double alpha, std::size_t k, Rng& rng);

/// Integer counts summing to `total`, largest remainder first (ties to the lower index).
std::vector<std::size_t> largest_remainder(const std::vector<double>& proportions, std::size_t total);

/// Hands out the pool's samples per the assignment. The pool must hold exactly
/// samples_per_label samples of every label; samples within a label are shuffled
/// by `seed` before being dealt to clients in ascending id order.
std::vector<Dataset> materialize(const Partition& partition, const Dataset& pool, std::uint64_t seed);

/// Rows: label,client,count.
void write_partition_csv(const Partition& partition, std::ostream& os);

}  // namespace fedgm
