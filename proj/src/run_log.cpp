#include "fedgm/run_log.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "fedgm/errors.hpp"

namespace fedgm {

double RoundRecord::mean_staleness() const {
    if (staleness.empty()) return 0.0;
    double s = 0.0;
    for (long v : staleness) s += static_cast<double>(v);
    return s / static_cast<double>(staleness.size());
}

long RoundRecord::max_staleness() const {
    return staleness.empty() ? 0 : *std::max_element(staleness.begin(), staleness.end());
}

double RoundRecord::mean_k() const {
    if (k_used.empty()) return 0.0;
    double s = 0.0;
    for (int v : k_used) s += v;
    return s / static_cast<double>(k_used.size());
}

std::uint64_t hash_participants(std::span<const int> ids) {
    std::vector<int> sorted(ids.begin(), ids.end());
    std::sort(sorted.begin(), sorted.end());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (int id : sorted) {
        auto v = static_cast<std::uint32_t>(id);
        for (int b = 0; b < 4; ++b) {
            h ^= (v >> (8 * b)) & 0xffU;
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

namespace {

void put(std::ostream& os, double v) {
    if (std::isnan(v))
        os << "nan";
    else
        os << v;
}

double parse_double(const std::string& s) {
    if (s == "nan" || s == "-nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    return std::stod(s);
}

}  // namespace

void write_run_log_csv(const RunLog& log, std::ostream& os) {
    os << std::setprecision(17);
    os << "round,stage,loss,grad_sq_norm,h_norm,lyapunov_residual,participants_hash";
    if (log.async) os << ",mean_staleness,max_staleness,mean_K";
    os << '\n';
    for (const auto& r : log.records) {
        os << r.round << ',' << r.stage << ',';
        put(os, r.train_loss);
        os << ',';
        put(os, r.grad_sq_norm);
        os << ',';
        put(os, r.h_norm);
        os << ',';
        put(os, r.lyapunov_residual);
        os << ',' << r.participants_hash;
        if (log.async) os << ',' << r.mean_staleness() << ',' << r.max_staleness() << ',' << r.mean_k();
        os << '\n';
    }
    if (log.diverged) os << "# diverged at round " << log.divergence_round << ": " << log.divergence_message << '\n';
}

RunLog read_run_log_csv(std::istream& is) {
    RunLog log;
    std::string line;
    if (!std::getline(is, line)) throw ConfigError("run_log", "empty run log");
    log.async = line.find("mean_staleness") != std::string::npos;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            log.diverged = true;
            log.divergence_message = line;
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
        if (cells.size() < 7) throw ConfigError("run_log", "malformed row: " + line);
        RoundRecord r;
        r.round = std::stol(cells[0]);
        r.stage = std::stoi(cells[1]);
        r.train_loss = parse_double(cells[2]);
        r.grad_sq_norm = parse_double(cells[3]);
        r.h_norm = parse_double(cells[4]);
        r.lyapunov_residual = parse_double(cells[5]);
        r.participants_hash = std::stoull(cells[6]);
        log.records.push_back(std::move(r));
    }
    return log;
}

}  // namespace fedgm
