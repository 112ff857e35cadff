#pragma once

#include <vector>

#include "fedgm/problems.hpp"

namespace fedgm::testing {

/// Client i holds the single point centers[i] with identity Hessian, so
/// f_i(x) = 0.5 ||x - c_i||^2.
inline GlobalObjective point_quadratics(const std::vector<std::vector<double>>& centers) {
    std::vector<ClientObjective> clients;
    const std::size_t d = centers.front().size();
    for (std::size_t i = 0; i < centers.size(); ++i) {
        Dataset data;
        data.feature_dim = d;
        data.push_back(centers[i], 0);
        clients.emplace_back(static_cast<int>(i), ModelShape{ProblemKind::quadratic, d, 0, 0.0}, std::move(data));
    }
    return GlobalObjective(std::move(clients));
}

/// Heterogeneous quadratic: n clients, dimension d, random SPD Hessians.
/// With shared_hessian the clients differ only in their centres.
inline GlobalObjective random_quadratic(std::size_t n, std::size_t d, std::uint64_t seed,
                                        std::size_t samples = 20, bool shared_hessian = false,
                                        double cluster_scale = 2.0) {
    SyntheticSpec spec;
    spec.kind = ProblemKind::quadratic;
    spec.features = d;
    spec.labels = n;
    spec.samples_per_label = samples;
    spec.cluster_scale = cluster_scale;
    spec.noise = 0.5;
    spec.shared_hessian = shared_hessian;
    const Dataset pool = generate_pool(spec, seed);
    std::vector<Dataset> per_client(n);
    for (std::size_t j = 0; j < pool.size(); ++j) {
        auto& dst = per_client[static_cast<std::size_t>(pool.labels[j])];
        dst.feature_dim = d;
        dst.push_back(pool.row(j), pool.labels[j]);
    }
    return build_objective(spec, std::move(per_client), seed);
}

inline double max_abs_diff(const ParamVector& a, const ParamVector& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace fedgm::testing
