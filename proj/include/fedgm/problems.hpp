#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedgm/param_vector.hpp"
#include "fedgm/rng.hpp"

namespace fedgm {

enum class ProblemKind { quadratic, logistic, mlp };

std::string to_string(ProblemKind kind);
ProblemKind problem_kind_from_string(const std::string& name);

/// Row-major labelled samples. For the quadratic kind a row is a point a_j and
/// the label only matters for partitioning.
struct Dataset {
    std::size_t feature_dim = 0;
    std::vector<double> features;
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
    bool empty() const { return labels.empty(); }
    std::span<const double> row(std::size_t i) const {
        return {features.data() + i * feature_dim, feature_dim};
    }
    void push_back(std::span<const double> x, int label);
};

/// Model architecture shared by all clients of one objective.
///
/// Parameter layouts:
///   quadratic  x in R^input_dim
///   logistic   [w (input_dim), b]
///   mlp        [W1 (hidden x input_dim, row-major), b1 (hidden), w2 (hidden), b2]
///              i.e. layer-major, weights then biases; output is a logit.
/// logistic and mlp use binary targets y = label % 2 and add 0.5*l2*||x||^2.
struct ModelShape {
    ProblemKind kind = ProblemKind::quadratic;
    std::size_t input_dim = 0;
    std::size_t hidden = 0;
    double l2 = 0.0;

    std::size_t param_dim() const;
};

/// One client's f_i. Quadratic clients carry a dense symmetric PSD Hessian A_i
/// and f_i(x) = (1/N) sum_j 0.5 (x - a_j)^T A_i (x - a_j).
class ClientObjective {
public:
    ClientObjective(int id, ModelShape shape, Dataset data, std::vector<double> hessian = {});

    int id() const { return id_; }
    ProblemKind kind() const { return shape_.kind; }
    const ModelShape& shape() const { return shape_; }
    std::size_t dim() const { return shape_.param_dim(); }
    const Dataset& data() const { return data_; }
    std::size_t dataset_size() const { return data_.size(); }
    /// Row-major d x d; empty unless quadratic.
    const std::vector<double>& hessian() const { return hessian_; }
    /// Mean of the sample points (quadratic minimiser).
    const ParamVector& center() const { return center_; }

    double loss(const ParamVector& x) const;
    ParamVector grad(const ParamVector& x) const;
    /// Average of per-sample gradients over `indices` (repeats allowed).
    ParamVector batch_grad(const ParamVector& x, std::span<const std::size_t> indices) const;

private:
    ParamVector hessian_times(const ParamVector& v) const;
    void accumulate_sample_grad(const ParamVector& x, std::size_t j, ParamVector& out,
                                std::vector<double>& scratch) const;
    double sample_loss(const ParamVector& x, std::size_t j, std::vector<double>& scratch) const;

    int id_;
    ModelShape shape_;
    Dataset data_;
    std::vector<double> hessian_;
    ParamVector center_;
    double spread_ = 0.0;  // (1/N) sum_j 0.5 (a_j - c)^T A (a_j - c)
};

/// batch_size == 0 or >= dataset size means full batch (exact gradient).
struct MinibatchSpec {
    std::size_t batch_size = 0;
};

/// Minibatch gradient, samples drawn with replacement from the client dataset.
ParamVector stochastic_grad(const ClientObjective& client, const ParamVector& x,
                            const MinibatchSpec& batch, Rng& rng);

struct KnownOptimum {
    ParamVector x;
    double value = 0.0;
};

/// f(x) = (1/n) sum_i f_i(x).
class GlobalObjective {
public:
    explicit GlobalObjective(std::vector<ClientObjective> clients,
                             std::optional<KnownOptimum> optimum = std::nullopt);

    std::size_t num_clients() const { return clients_.size(); }
    std::size_t dim() const { return clients_.front().dim(); }
    ProblemKind kind() const { return clients_.front().kind(); }
    const ClientObjective& client(std::size_t i) const { return clients_[i]; }
    const std::vector<ClientObjective>& clients() const { return clients_; }
    const std::optional<KnownOptimum>& known_optimum() const { return optimum_; }

    /// Largest eigenvalue of the averaged Hessian; quadratic kind only.
    std::optional<double> exact_lipschitz() const;

private:
    std::vector<ClientObjective> clients_;
    std::optional<KnownOptimum> optimum_;
};

double eval_loss(const GlobalObjective& obj, const ParamVector& x);
ParamVector eval_grad(const GlobalObjective& obj, const ParamVector& x);

/// Central differences of eval_loss, one coordinate at a time.
ParamVector finite_diff_grad(const GlobalObjective& obj, const ParamVector& x, double step = 1e-6);

/// Exact for quadratics; otherwise power iteration on Hessian-vector products
/// approximated by central gradient differences at x.
double estimate_lipschitz(const GlobalObjective& obj, const ParamVector& x, std::uint64_t seed,
                          int iterations = 20);

/// Zeros for quadratics, per-layer uniform +-1/sqrt(fan_in) otherwise.
ParamVector initial_point(const ModelShape& shape, std::uint64_t seed);

/// Synthetic data generator: one Gaussian cluster per label.
struct SyntheticSpec {
    ProblemKind kind = ProblemKind::quadratic;
    std::size_t features = 10;
    std::size_t labels = 10;
    std::size_t samples_per_label = 100;
    double cluster_scale = 1.0;  // std of cluster means
    double noise = 1.0;          // within-cluster std
    std::size_t hidden = 8;
    double l2 = 0.0;
    // Quadratic Hessians: eigenvalues uniform in [hessian_mu, hessian_L] with a
    // random rotation per client (one for all clients when shared_hessian);
    // identity when hessian_identity.
    bool hessian_identity = false;
    bool shared_hessian = false;
    double hessian_mu = 0.5;
    double hessian_L = 1.0;

    ModelShape shape() const;
};

/// labels * samples_per_label samples, grouped by label in ascending order.
Dataset generate_pool(const SyntheticSpec& spec, std::uint64_t seed);

/// Builds client objectives (and the known optimum for quadratics).
GlobalObjective build_objective(const SyntheticSpec& spec, std::vector<Dataset> client_data,
                                std::uint64_t seed);

/// One row per sample: features then label.
void write_dataset_csv(const Dataset& data, std::ostream& os);

}  // namespace fedgm
