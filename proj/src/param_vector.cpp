#include "fedgm/param_vector.hpp"

#include "fedgm/errors.hpp"

namespace fedgm {

ParamVector& ParamVector::operator+=(const ParamVector& o) {
    require_same_dim(*this, o, "operator+=");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
    return *this;
}

ParamVector& ParamVector::operator-=(const ParamVector& o) {
    require_same_dim(*this, o, "operator-=");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= o.values_[i];
    return *this;
}

ParamVector& ParamVector::operator*=(double s) {
    for (double& v : values_) v *= s;
    return *this;
}

ParamVector& ParamVector::operator/=(double s) {
    for (double& v : values_) v /= s;
    return *this;
}

ParamVector& ParamVector::axpy(double s, const ParamVector& o) {
    require_same_dim(*this, o, "axpy");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += s * o.values_[i];
    return *this;
}

ParamVector operator+(ParamVector a, const ParamVector& b) { return a += b; }
ParamVector operator-(ParamVector a, const ParamVector& b) { return a -= b; }
ParamVector operator*(double s, ParamVector a) { return a *= s; }
ParamVector operator*(ParamVector a, double s) { return a *= s; }
ParamVector operator/(ParamVector a, double s) { return a /= s; }

double dot(const ParamVector& a, const ParamVector& b) {
    require_same_dim(a, b, "dot");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double squared_norm(const ParamVector& a) {
    double acc = 0.0;
    for (double v : a) acc += v * v;
    return acc;
}

double norm(const ParamVector& a) { return std::sqrt(squared_norm(a)); }

bool all_finite(const ParamVector& a) {
    for (double v : a)
        if (!std::isfinite(v)) return false;
    return true;
}

void require_same_dim(const ParamVector& a, const ParamVector& b, const char* what) {
    if (a.size() != b.size())
        throw ConfigError("dimension", std::string(what) + ": dimension mismatch (" +
                                           std::to_string(a.size()) + " vs " +
                                           std::to_string(b.size()) + ")");
}

}  // namespace fedgm
