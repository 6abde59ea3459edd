#include "hgrec/optim.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace hgrec {

Matrix& ParameterStore::add(const std::string& name, Matrix init) {
    if (entries_.count(name))
        throw std::invalid_argument("parameter already exists: " + name);
    Entry e;
    e.m = Matrix::Zero(init.rows(), init.cols());
    e.v = Matrix::Zero(init.rows(), init.cols());
    e.value = std::move(init);
    return entries_.emplace(name, std::move(e)).first->second.value;
}

Matrix& ParameterStore::at(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end())
        throw std::out_of_range("no such parameter: " + name);
    return it->second.value;
}

const Matrix& ParameterStore::at(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end())
        throw std::out_of_range("no such parameter: " + name);
    return it->second.value;
}

void ParameterStore::adam_step(const std::map<std::string, Matrix>& grads,
                               const AdamConfig& cfg) {
    for (const auto& [name, g] : grads) {
        if (!g.allFinite())
            throw std::runtime_error("divergence detected: non-finite gradient for " + name);
        if (!entries_.count(name))
            throw std::out_of_range("gradient for unknown parameter: " + name);
    }
    ++step_count_;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_count_));
    for (auto& [name, e] : entries_) {
        auto it = grads.find(name);
        const Matrix g = it != grads.end()
                             ? it->second
                             : Matrix::Zero(e.value.rows(), e.value.cols());
        e.m = cfg.beta1 * e.m + (1.0 - cfg.beta1) * g;
        e.v = cfg.beta2 * e.v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
        const Matrix m_hat = e.m / bc1;
        const Matrix v_hat = e.v / bc2;
        e.value -= cfg.lr * m_hat.cwiseQuotient(
                                (v_hat.cwiseSqrt().array() + cfg.eps).matrix());
    }
}

void ParameterStore::save_checkpoint(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open checkpoint for write: " + path);
    char buf[64];
    for (const auto& [name, e] : entries_) {
        out << name << ',' << e.value.rows() << ',' << e.value.cols();
        for (Eigen::Index i = 0; i < e.value.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%.17g", e.value(i));
            out << ',' << buf;
        }
        out << '\n';
    }
}

void ParameterStore::load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    entries_.clear();
    step_count_ = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string name, field;
        std::getline(ss, name, ',');
        std::getline(ss, field, ',');
        const Eigen::Index rows = std::stol(field);
        std::getline(ss, field, ',');
        const Eigen::Index cols = std::stol(field);
        Matrix v(rows, cols);
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            if (!std::getline(ss, field, ','))
                throw std::runtime_error("truncated checkpoint row for " + name);
            v(i) = std::stod(field);
        }
        add(name, std::move(v));
    }
}

const std::map<std::string, Matrix>& ParameterStore::values() const {
    values_cache_.clear();
    for (const auto& [name, e] : entries_) values_cache_.emplace(name, e.value);
    return values_cache_;
}

std::map<std::string, Matrix> ParameterStore::snapshot() const {
    std::map<std::string, Matrix> out;
    for (const auto& [name, e] : entries_) out.emplace(name, e.value);
    return out;
}

void ParameterStore::restore(const std::map<std::string, Matrix>& snap) {
    for (const auto& [name, v] : snap) at(name) = v;
}

}  // namespace hgrec
