#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace fedgm {

/// Flat real-valued parameter vector. Every model, gradient and update in the
/// library is carried in this form; arithmetic partners must share a dimension.
class ParamVector {
public:
    ParamVector() = default;
    explicit ParamVector(std::size_t dim, double fill = 0.0) : values_(dim, fill) {}
    ParamVector(std::initializer_list<double> init) : values_(init) {}
    explicit ParamVector(std::vector<double> values) : values_(std::move(values)) {}

    std::size_t size() const { return values_.size(); }
    bool empty() const { return values_.empty(); }

    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    std::span<double> span() { return values_; }
    std::span<const double> span() const { return values_; }
    const std::vector<double>& values() const { return values_; }

    auto begin() { return values_.begin(); }
    auto end() { return values_.end(); }
    auto begin() const { return values_.begin(); }
    auto end() const { return values_.end(); }

    ParamVector& operator+=(const ParamVector& o);
    ParamVector& operator-=(const ParamVector& o);
    ParamVector& operator*=(double s);
    ParamVector& operator/=(double s);

    /// this += s * o
    ParamVector& axpy(double s, const ParamVector& o);

    bool operator==(const ParamVector& o) const { return values_ == o.values_; }

private:
    std::vector<double> values_;
};

ParamVector operator+(ParamVector a, const ParamVector& b);
ParamVector operator-(ParamVector a, const ParamVector& b);
ParamVector operator*(double s, ParamVector a);
ParamVector operator*(ParamVector a, double s);
ParamVector operator/(ParamVector a, double s);

double dot(const ParamVector& a, const ParamVector& b);
double squared_norm(const ParamVector& a);
double norm(const ParamVector& a);
bool all_finite(const ParamVector& a);

/// Throws ConfigError when the dimensions differ.
void require_same_dim(const ParamVector& a, const ParamVector& b, const char* what);

}  // namespace fedgm
