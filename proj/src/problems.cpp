#include "fedgm/problems.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>

#include "fedgm/errors.hpp"

namespace fedgm {

namespace {

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double target(int label) { return static_cast<double>(label % 2); }

}  // namespace

std::string to_string(ProblemKind kind) {
    switch (kind) {
        case ProblemKind::quadratic: return "quadratic";
        case ProblemKind::logistic: return "logistic";
        case ProblemKind::mlp: return "mlp";
    }
    return "unknown";
}

ProblemKind problem_kind_from_string(const std::string& name) {
    if (name == "quadratic") return ProblemKind::quadratic;
    if (name == "logistic") return ProblemKind::logistic;
    if (name == "mlp") return ProblemKind::mlp;
    throw ConfigError("problem", "unknown problem kind '" + name + "'");
}

void Dataset::push_back(std::span<const double> x, int label) {
    if (feature_dim == 0 && labels.empty()) feature_dim = x.size();
    if (x.size() != feature_dim) throw ConfigError("dataset", "feature dimension mismatch");
    features.insert(features.end(), x.begin(), x.end());
    labels.push_back(label);
}

std::size_t ModelShape::param_dim() const {
    switch (kind) {
        case ProblemKind::quadratic: return input_dim;
        case ProblemKind::logistic: return input_dim + 1;
        case ProblemKind::mlp: return hidden * input_dim + 2 * hidden + 1;
    }
    return 0;
}

ClientObjective::ClientObjective(int id, ModelShape shape, Dataset data, std::vector<double> hessian)
    : id_(id), shape_(shape), data_(std::move(data)), hessian_(std::move(hessian)) {
    if (data_.empty()) throw ConfigError("problem", "client " + std::to_string(id) + " has an empty dataset");
    if (data_.feature_dim != shape_.input_dim)
        throw ConfigError("problem", "client " + std::to_string(id) + " feature dimension mismatch");
    if (shape_.kind == ProblemKind::mlp && shape_.hidden == 0)
        throw ConfigError("problem", "mlp needs at least one hidden unit");
    if (shape_.kind != ProblemKind::quadratic) return;

    const std::size_t d = shape_.input_dim;
    if (hessian_.empty()) {
        hessian_.assign(d * d, 0.0);
        for (std::size_t i = 0; i < d; ++i) hessian_[i * d + i] = 1.0;
    }
    if (hessian_.size() != d * d) throw ConfigError("problem", "hessian has the wrong size");
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < i; ++j)
            if (hessian_[i * d + j] != hessian_[j * d + i])
                throw ConfigError("problem", "hessian is not symmetric");

    center_ = ParamVector(d);
    for (std::size_t j = 0; j < data_.size(); ++j) {
        auto a = data_.row(j);
        for (std::size_t k = 0; k < d; ++k) center_[k] += a[k];
    }
    center_ /= static_cast<double>(data_.size());

    double spread = 0.0;
    for (std::size_t j = 0; j < data_.size(); ++j) {
        auto a = data_.row(j);
        ParamVector diff(d);
        for (std::size_t k = 0; k < d; ++k) diff[k] = a[k] - center_[k];
        spread += 0.5 * dot(diff, hessian_times(diff));
    }
    spread_ = spread / static_cast<double>(data_.size());
}

ParamVector ClientObjective::hessian_times(const ParamVector& v) const {
    const std::size_t d = v.size();
    ParamVector out(d);
    for (std::size_t i = 0; i < d; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < d; ++j) acc += hessian_[i * d + j] * v[j];
        out[i] = acc;
    }
    return out;
}

double ClientObjective::sample_loss(const ParamVector& x, std::size_t j, std::vector<double>& scratch) const {
    auto a = data_.row(j);
    const std::size_t p = shape_.input_dim;
    if (shape_.kind == ProblemKind::logistic) {
        double z = x[p];
        for (std::size_t k = 0; k < p; ++k) z += x[k] * a[k];
        return softplus(z) - target(data_.labels[j]) * z;
    }
    // mlp
    const std::size_t h = shape_.hidden;
    const std::size_t b1 = h * p, w2 = b1 + h, b2 = w2 + h;
    scratch.resize(h);
    double o = x[b2];
    for (std::size_t u = 0; u < h; ++u) {
        double z = x[b1 + u];
        for (std::size_t k = 0; k < p; ++k) z += x[u * p + k] * a[k];
        scratch[u] = std::tanh(z);
        o += x[w2 + u] * scratch[u];
    }
    return softplus(o) - target(data_.labels[j]) * o;
}

void ClientObjective::accumulate_sample_grad(const ParamVector& x, std::size_t j, ParamVector& out,
                                             std::vector<double>& scratch) const {
    auto a = data_.row(j);
    const std::size_t p = shape_.input_dim;
    const double y = target(data_.labels[j]);
    if (shape_.kind == ProblemKind::logistic) {
        double z = x[p];
        for (std::size_t k = 0; k < p; ++k) z += x[k] * a[k];
        const double r = sigmoid(z) - y;
        for (std::size_t k = 0; k < p; ++k) out[k] += r * a[k];
        out[p] += r;
        return;
    }
    const std::size_t h = shape_.hidden;
    const std::size_t b1 = h * p, w2 = b1 + h, b2 = w2 + h;
    scratch.resize(h);
    double o = x[b2];
    for (std::size_t u = 0; u < h; ++u) {
        double z = x[b1 + u];
        for (std::size_t k = 0; k < p; ++k) z += x[u * p + k] * a[k];
        scratch[u] = std::tanh(z);
        o += x[w2 + u] * scratch[u];
    }
    const double r = sigmoid(o) - y;
    out[b2] += r;
    for (std::size_t u = 0; u < h; ++u) {
        out[w2 + u] += r * scratch[u];
        const double dz = r * x[w2 + u] * (1.0 - scratch[u] * scratch[u]);
        out[b1 + u] += dz;
        for (std::size_t k = 0; k < p; ++k) out[u * p + k] += dz * a[k];
    }
}

double ClientObjective::loss(const ParamVector& x) const {
    if (x.size() != dim()) throw ConfigError("dimension", "loss: dimension mismatch");
    if (shape_.kind == ProblemKind::quadratic) {
        ParamVector diff = x - center_;
        return 0.5 * dot(diff, hessian_times(diff)) + spread_;
    }
    std::vector<double> scratch;
    double acc = 0.0;
    for (std::size_t j = 0; j < data_.size(); ++j) acc += sample_loss(x, j, scratch);
    return acc / static_cast<double>(data_.size()) + 0.5 * shape_.l2 * squared_norm(x);
}

ParamVector ClientObjective::grad(const ParamVector& x) const {
    if (x.size() != dim()) throw ConfigError("dimension", "grad: dimension mismatch");
    if (shape_.kind == ProblemKind::quadratic) return hessian_times(x - center_);
    std::vector<std::size_t> all(data_.size());
    for (std::size_t j = 0; j < all.size(); ++j) all[j] = j;
    return batch_grad(x, all);
}

ParamVector ClientObjective::batch_grad(const ParamVector& x, std::span<const std::size_t> indices) const {
    if (x.size() != dim()) throw ConfigError("dimension", "batch_grad: dimension mismatch");
    if (indices.empty()) throw ConfigError("problem", "empty minibatch");
    const double inv = 1.0 / static_cast<double>(indices.size());
    if (shape_.kind == ProblemKind::quadratic) {
        ParamVector mean(x.size());
        for (std::size_t j : indices) {
            auto a = data_.row(j);
            for (std::size_t k = 0; k < x.size(); ++k) mean[k] += a[k];
        }
        mean *= inv;
        return hessian_times(x - mean);
    }
    ParamVector out(x.size());
    std::vector<double> scratch;
    for (std::size_t j : indices) accumulate_sample_grad(x, j, out, scratch);
    out *= inv;
    if (shape_.l2 != 0.0) out.axpy(shape_.l2, x);
    return out;
}

ParamVector stochastic_grad(const ClientObjective& client, const ParamVector& x, const MinibatchSpec& batch,
                            Rng& rng) {
    const std::size_t n = client.dataset_size();
    if (n == 0) throw ConfigError("problem", "empty dataset");
    if (batch.batch_size == 0 || batch.batch_size >= n) return client.grad(x);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<std::size_t> idx(batch.batch_size);
    for (auto& i : idx) i = pick(rng);
    return client.batch_grad(x, idx);
}

GlobalObjective::GlobalObjective(std::vector<ClientObjective> clients, std::optional<KnownOptimum> optimum)
    : clients_(std::move(clients)), optimum_(std::move(optimum)) {
    if (clients_.empty()) throw ConfigError("problem", "objective needs at least one client");
    for (const auto& c : clients_)
        if (c.dim() != clients_.front().dim() || c.kind() != clients_.front().kind())
            throw ConfigError("problem", "clients disagree on model shape");
    if (optimum_ && optimum_->x.size() != dim())
        throw ConfigError("problem", "known optimum has the wrong dimension");
}

std::optional<double> GlobalObjective::exact_lipschitz() const {
    if (kind() != ProblemKind::quadratic) return std::nullopt;
    const auto d = static_cast<Eigen::Index>(dim());
    Eigen::MatrixXd avg = Eigen::MatrixXd::Zero(d, d);
    for (const auto& c : clients_) avg += Eigen::Map<const Eigen::MatrixXd>(c.hessian().data(), d, d);
    avg /= static_cast<double>(clients_.size());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(avg, Eigen::EigenvaluesOnly);
    return es.eigenvalues().maxCoeff();
}

double eval_loss(const GlobalObjective& obj, const ParamVector& x) {
    if (x.size() != obj.dim()) throw ConfigError("dimension", "eval_loss: dimension mismatch");
    double acc = 0.0;
    for (const auto& c : obj.clients()) acc += c.loss(x);
    return acc / static_cast<double>(obj.num_clients());
}

ParamVector eval_grad(const GlobalObjective& obj, const ParamVector& x) {
    if (x.size() != obj.dim()) throw ConfigError("dimension", "eval_grad: dimension mismatch");
    ParamVector acc(x.size());
    for (const auto& c : obj.clients()) acc += c.grad(x);
    acc /= static_cast<double>(obj.num_clients());
    return acc;
}

ParamVector finite_diff_grad(const GlobalObjective& obj, const ParamVector& x, double step) {
    if (!(step > 0.0)) throw ConfigError("finite_diff", "step must be positive");
    if (x.size() != obj.dim()) throw ConfigError("dimension", "finite_diff_grad: dimension mismatch");
    ParamVector g(x.size());
    ParamVector probe = x;
    for (std::size_t k = 0; k < x.size(); ++k) {
        probe[k] = x[k] + step;
        const double up = eval_loss(obj, probe);
        probe[k] = x[k] - step;
        const double down = eval_loss(obj, probe);
        probe[k] = x[k];
        g[k] = (up - down) / (2.0 * step);
    }
    return g;
}

double estimate_lipschitz(const GlobalObjective& obj, const ParamVector& x, std::uint64_t seed, int iterations) {
    if (auto exact = obj.exact_lipschitz()) return *exact;
    Rng rng = make_rng(seed, Stream::probe, {0x4c});
    std::normal_distribution<double> normal;
    ParamVector v(x.size());
    for (double& e : v) e = normal(rng);
    v /= norm(v);
    const double eps = 1e-5;
    double lambda = 0.0;
    for (int it = 0; it < iterations; ++it) {
        ParamVector hv = eval_grad(obj, x + eps * v) - eval_grad(obj, x - eps * v);
        hv /= 2.0 * eps;
        lambda = norm(hv);
        if (lambda == 0.0) break;
        v = hv / lambda;
    }
    return lambda;
}

ParamVector initial_point(const ModelShape& shape, std::uint64_t seed) {
    ParamVector x(shape.param_dim());
    if (shape.kind == ProblemKind::quadratic) return x;
    Rng rng = make_rng(seed, Stream::init);
    auto fill = [&](std::size_t from, std::size_t count, std::size_t fan_in) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (std::size_t k = from; k < from + count; ++k) x[k] = u(rng);
    };
    const std::size_t p = shape.input_dim;
    if (shape.kind == ProblemKind::logistic) {
        fill(0, p + 1, p);
    } else {
        const std::size_t h = shape.hidden;
        fill(0, h * p + h, p);
        fill(h * p + h, h + 1, h);
    }
    return x;
}

ModelShape SyntheticSpec::shape() const { return ModelShape{kind, features, hidden, l2}; }

Dataset generate_pool(const SyntheticSpec& spec, std::uint64_t seed) {
    if (spec.features == 0 || spec.labels == 0 || spec.samples_per_label == 0)
        throw ConfigError("problem", "features, labels and samples_per_label must be positive");
    Rng rng = make_rng(seed, Stream::data);
    std::normal_distribution<double> normal;
    std::vector<std::vector<double>> means(spec.labels, std::vector<double>(spec.features));
    for (auto& m : means)
        for (double& v : m) v = spec.cluster_scale * normal(rng);

    Dataset pool;
    pool.feature_dim = spec.features;
    std::vector<double> row(spec.features);
    for (std::size_t c = 0; c < spec.labels; ++c) {
        for (std::size_t s = 0; s < spec.samples_per_label; ++s) {
            for (std::size_t k = 0; k < spec.features; ++k) row[k] = means[c][k] + spec.noise * normal(rng);
            pool.push_back(row, static_cast<int>(c));
        }
    }
    return pool;
}

namespace {

std::vector<double> random_spd(std::size_t d, double mu, double L, Rng& rng) {
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> eig(mu, L);
    const auto n = static_cast<Eigen::Index>(d);
    Eigen::MatrixXd g(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) g(i, j) = normal(rng);
    Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
    Eigen::VectorXd lambda(n);
    for (Eigen::Index i = 0; i < n; ++i) lambda(i) = eig(rng);
    Eigen::MatrixXd a = q * lambda.asDiagonal() * q.transpose();
    a = 0.5 * (a + a.transpose());
    std::vector<double> out(d * d);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) out[static_cast<std::size_t>(i * n + j)] = a(i, j);
    // exact symmetry
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < i; ++j) out[j * d + i] = out[i * d + j];
    return out;
}

}  // namespace

GlobalObjective build_objective(const SyntheticSpec& spec, std::vector<Dataset> client_data, std::uint64_t seed) {
    if (spec.hessian_mu < 0.0 || spec.hessian_L < spec.hessian_mu)
        throw ConfigError("problem", "need 0 <= hessian_mu <= hessian_L");
    const ModelShape shape = spec.shape();
    std::vector<ClientObjective> clients;
    clients.reserve(client_data.size());
    for (std::size_t i = 0; i < client_data.size(); ++i) {
        std::vector<double> hessian;
        if (shape.kind == ProblemKind::quadratic && !spec.hessian_identity) {
            Rng rng = make_rng(seed, Stream::hessian, {spec.shared_hessian ? std::size_t{0} : i});
            hessian = random_spd(shape.input_dim, spec.hessian_mu, spec.hessian_L, rng);
        }
        clients.emplace_back(static_cast<int>(i), shape, std::move(client_data[i]), std::move(hessian));
    }
    if (shape.kind != ProblemKind::quadratic) return GlobalObjective(std::move(clients));

    // x* solves (sum A_i) x = sum A_i c_i
    const auto d = static_cast<Eigen::Index>(shape.input_dim);
    Eigen::MatrixXd a_sum = Eigen::MatrixXd::Zero(d, d);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d);
    for (const auto& c : clients) {
        Eigen::Map<const Eigen::MatrixXd> a(c.hessian().data(), d, d);
        Eigen::Map<const Eigen::VectorXd> center(c.center().values().data(), d);
        a_sum += a;
        rhs += a * center;
    }
    Eigen::VectorXd xs = a_sum.ldlt().solve(rhs);
    GlobalObjective obj(std::move(clients));
    ParamVector x(std::vector<double>(xs.data(), xs.data() + d));
    const double value = eval_loss(obj, x);
    return GlobalObjective(obj.clients(), KnownOptimum{x, value});
}

void write_dataset_csv(const Dataset& data, std::ostream& os) {
    os << std::setprecision(17);
    for (std::size_t k = 0; k < data.feature_dim; ++k) os << 'f' << k << ',';
    os << "label\n";
    for (std::size_t j = 0; j < data.size(); ++j) {
        for (double v : data.row(j)) os << v << ',';
        os << data.labels[j] << '\n';
    }
}

}  // namespace fedgm
