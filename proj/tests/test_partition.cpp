#include <doctest.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "fedgm/errors.hpp"
#include "fedgm/partition.hpp"

using namespace fedgm;

namespace {

double mean_max_share(double alpha, std::size_t n_clients, int seeds) {
    double total = 0.0;
    int count = 0;
    for (int s = 0; s < seeds; ++s) {
        const Partition p = draw_partition({alpha, n_clients, 10, 500, static_cast<std::uint64_t>(s)});
        for (const auto& row : p.counts) {
            total += static_cast<double>(*std::max_element(row.begin(), row.end())) / 500.0;
            ++count;
        }
    }
    return total / count;
}

Dataset labelled_pool(std::size_t labels, std::size_t per_label) {
    Dataset pool;
    pool.feature_dim = 1;
    for (std::size_t l = 0; l < labels; ++l)
        for (std::size_t j = 0; j < per_label; ++j)
            pool.push_back(std::vector<double>{static_cast<double>(l * per_label + j)}, static_cast<int>(l));
    return pool;
}

}  // namespace

TEST_CASE("counts are conserved per label and every client is non-empty") {
    for (double alpha : {0.01, 0.1, 0.5, 10.0}) {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            const PartitionConfig cfg{alpha, 100, 10, 50, seed};
            const Partition p = draw_partition(cfg);
            REQUIRE(p.labels() == 10);
            REQUIRE(p.n_clients() == 100);
            for (const auto& row : p.counts) CHECK(std::accumulate(row.begin(), row.end(), std::size_t{0}) == 50);
            for (std::size_t c = 0; c < 100; ++c) CHECK(p.client_total(c) >= 1);
        }
    }
}

TEST_CASE("near-infinite concentration splits labels evenly") {
    const Partition p = draw_partition({1e6, 4, 10, 400, 3});
    for (const auto& row : p.counts)
        for (std::size_t c : row) CHECK((c >= 90 && c <= 110));
}

TEST_CASE("a single client receives everything") {
    const Partition p = draw_partition({0.5, 1, 5, 30, 1});
    for (const auto& row : p.counts) CHECK(row == std::vector<std::size_t>{30});
}

TEST_CASE("draw_partition is a pure function of its config") {
    const PartitionConfig cfg{0.5, 20, 10, 40, 99};
    CHECK(draw_partition(cfg).counts == draw_partition(cfg).counts);
    PartitionConfig other = cfg;
    other.seed = 100;
    CHECK(draw_partition(cfg).counts != draw_partition(other).counts);
}

TEST_CASE("heterogeneity decreases as alpha grows") {
    const double a01 = mean_max_share(0.1, 100, 50);
    const double a05 = mean_max_share(0.5, 100, 50);
    const double a10 = mean_max_share(10.0, 100, 50);
    CHECK(a01 > a05);
    CHECK(a05 > a10);
}

TEST_CASE("largest remainder rounding") {
    CHECK(largest_remainder({0.5, 0.5}, 3) == std::vector<std::size_t>{2, 1});
    CHECK(largest_remainder({0.25, 0.25, 0.5}, 4) == std::vector<std::size_t>{1, 1, 2});
    CHECK(largest_remainder({0.1, 0.65, 0.25}, 10) == std::vector<std::size_t>{1, 7, 2});
    const auto c = largest_remainder({1.0 / 3, 1.0 / 3, 1.0 / 3}, 100);
    CHECK(c == std::vector<std::size_t>{34, 33, 33});
}

TEST_CASE("dirichlet proportions lie on the simplex") {
    Rng rng(5);
    std::vector<double> mean(4, 0.0);
    for (int k = 0; k < 4000; ++k) {
        const auto p = sample_dirichlet(2.0, 4, rng);
        CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
        for (std::size_t i = 0; i < 4; ++i) mean[i] += p[i] / 4000.0;
    }
    // Beta(2, 6) marginal: mean 1/4, sd ~0.145, so 3 sd of the mean is ~0.007
    for (double m : mean) CHECK(std::abs(m - 0.25) < 0.007);
}

TEST_CASE("materialize conserves the pool") {
    const Dataset pool = labelled_pool(5, 40);
    const Partition p = draw_partition({0.3, 7, 5, 40, 12});
    const auto clients = materialize(p, pool, 12);
    REQUIRE(clients.size() == 7);
    std::multiset<double> seen;
    for (std::size_t c = 0; c < clients.size(); ++c) {
        CHECK(clients[c].size() == p.client_total(c));
        std::map<int, std::size_t> per_label;
        for (std::size_t j = 0; j < clients[c].size(); ++j) {
            seen.insert(clients[c].row(j)[0]);
            ++per_label[clients[c].labels[j]];
            // the feature value encodes the label the sample came from
            CHECK(static_cast<int>(clients[c].row(j)[0]) / 40 == clients[c].labels[j]);
        }
        for (const auto& [label, count] : per_label) CHECK(count == p.counts[static_cast<std::size_t>(label)][c]);
    }
    std::multiset<double> expected(pool.features.begin(), pool.features.end());
    CHECK(seen == expected);

    const auto again = materialize(p, pool, 12);
    for (std::size_t c = 0; c < clients.size(); ++c) CHECK(clients[c].features == again[c].features);
}

TEST_CASE("materialize follows explicit counts") {
    Partition p;
    p.counts = {{300, 100}};
    const auto clients = materialize(p, labelled_pool(1, 400), 1);
    CHECK(clients[0].size() == 300);
    CHECK(clients[1].size() == 100);
    Partition bad;
    bad.counts = {{300, 50}};
    CHECK_THROWS_AS(materialize(bad, labelled_pool(1, 400), 1), ConfigError);
}

TEST_CASE("invalid configs are rejected") {
    CHECK_THROWS_AS(draw_partition({0.0, 4, 2, 10, 0}), ConfigError);
    CHECK_THROWS_AS(draw_partition({-1.0, 4, 2, 10, 0}), ConfigError);
    CHECK_THROWS_AS(draw_partition({0.5, 0, 2, 10, 0}), ConfigError);
    CHECK_THROWS_AS(draw_partition({0.5, 30, 2, 10, 0}), ConfigError);
}

TEST_CASE("partition csv") {
    Partition p;
    p.counts = {{1, 2}, {3, 0}};
    std::ostringstream os;
    write_partition_csv(p, os);
    CHECK(os.str() == "label,client,count\n0,0,1\n0,1,2\n1,0,3\n1,1,0\n");
}
