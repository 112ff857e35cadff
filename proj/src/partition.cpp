#include "fedgm/partition.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>
#include <random>

#include "fedgm/errors.hpp"

namespace fedgm {

void PartitionConfig::validate() const {
    if (!(alpha > 0.0)) throw ConfigError("partition", "alpha must be positive");
    if (n_clients < 1) throw ConfigError("partition", "need at least one client");
    if (labels < 1 || samples_per_label < 1) throw ConfigError("partition", "labels and samples_per_label must be positive");
    if (labels * samples_per_label < n_clients)
        throw ConfigError("partition", "fewer samples than clients; some client would stay empty");
}

std::size_t Partition::client_total(std::size_t client) const {
    std::size_t total = 0;
    for (const auto& row : counts) total += row[client];
    return total;
}

std::vector<double> sample_dirichlet(double alpha, std::size_t k, Rng& rng) {
    std::gamma_distribution<double> gamma(alpha, 1.0);
    std::vector<double> p(k);
    double sum = 0.0;
    for (double& v : p) {
        v = gamma(rng);
        sum += v;
    }
    if (!(sum > 0.0)) {
        // every draw underflowed (tiny alpha); fall back to a uniform split
        std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(k));
        return p;
    }
    for (double& v : p) v /= sum;
    return p;
}

std::vector<std::size_t> largest_remainder(const std::vector<double>& proportions, std::size_t total) {
    const std::size_t k = proportions.size();
    std::vector<std::size_t> counts(k);
    std::vector<double> remainder(k);
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < k; ++i) {
        const double exact = proportions[i] * static_cast<double>(total);
        counts[i] = static_cast<std::size_t>(std::floor(exact));
        remainder[i] = exact - static_cast<double>(counts[i]);
        assigned += counts[i];
    }
    // floating error can push the floor sum above total by a unit or two
    while (assigned > total) {
        auto it = std::max_element(counts.begin(), counts.end());
        --*it;
        --assigned;
    }
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (std::size_t r = 0; assigned < total; r = (r + 1) % k) {
        ++counts[order[r]];
        ++assigned;
    }
    return counts;
}

Partition draw_partition(const PartitionConfig& cfg) {
    cfg.validate();
    Partition part;
    part.counts.resize(cfg.labels);
    for (std::size_t label = 0; label < cfg.labels; ++label) {
        Rng rng = make_rng(cfg.seed, Stream::partition, {label});
        const auto p = sample_dirichlet(cfg.alpha, cfg.n_clients, rng);
        part.counts[label] = largest_remainder(p, cfg.samples_per_label);
    }

    // Repair: an empty client takes one sample from the currently largest client,
    // drawn from the label where that donor holds the most samples.
    for (std::size_t client = 0; client < cfg.n_clients; ++client) {
        if (part.client_total(client) > 0) continue;
        std::size_t donor = 0, donor_total = 0;
        for (std::size_t c = 0; c < cfg.n_clients; ++c) {
            const std::size_t t = part.client_total(c);
            if (t > donor_total) {
                donor = c;
                donor_total = t;
            }
        }
        std::size_t label = 0;
        for (std::size_t l = 1; l < cfg.labels; ++l)
            if (part.counts[l][donor] > part.counts[label][donor]) label = l;
        --part.counts[label][donor];
        ++part.counts[label][client];
    }
    return part;
}

std::vector<Dataset> materialize(const Partition& partition, const Dataset& pool, std::uint64_t seed) {
    const std::size_t labels = partition.labels();
    const std::size_t n = partition.n_clients();
    std::vector<std::vector<std::size_t>> by_label(labels);
    for (std::size_t j = 0; j < pool.size(); ++j) {
        const int label = pool.labels[j];
        if (label < 0 || static_cast<std::size_t>(label) >= labels)
            throw ConfigError("partition", "pool label " + std::to_string(label) + " outside the partition");
        by_label[static_cast<std::size_t>(label)].push_back(j);
    }
    for (std::size_t l = 0; l < labels; ++l) {
        const std::size_t need = std::accumulate(partition.counts[l].begin(), partition.counts[l].end(), std::size_t{0});
        if (by_label[l].size() != need)
            throw ConfigError("partition", "pool holds " + std::to_string(by_label[l].size()) + " samples of label " +
                                               std::to_string(l) + " but the partition assigns " + std::to_string(need));
    }

    std::vector<Dataset> out(n);
    for (auto& d : out) d.feature_dim = pool.feature_dim;
    for (std::size_t l = 0; l < labels; ++l) {
        Rng rng = make_rng(seed, Stream::materialize, {l});
        auto& idx = by_label[l];
        std::shuffle(idx.begin(), idx.end(), rng);
        std::size_t cursor = 0;
        for (std::size_t c = 0; c < n; ++c)
            for (std::size_t k = 0; k < partition.counts[l][c]; ++k, ++cursor)
                out[c].push_back(pool.row(idx[cursor]), pool.labels[idx[cursor]]);
    }
    return out;
}

void write_partition_csv(const Partition& partition, std::ostream& os) {
    os << "label,client,count\n";
    for (std::size_t l = 0; l < partition.labels(); ++l)
        for (std::size_t c = 0; c < partition.n_clients(); ++c)
            os << l << ',' << c << ',' << partition.counts[l][c] << '\n';
}

}  // namespace fedgm
