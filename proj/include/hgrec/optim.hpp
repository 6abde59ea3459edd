#pragma once
// Named parameter buffers with Adam moments and CSV checkpointing.

#include "hgrec/tensor.hpp"

#include <map>
#include <string>

namespace hgrec {

struct AdamConfig {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class ParameterStore {
public:
    Matrix& add(const std::string& name, Matrix init);
    Matrix& at(const std::string& name);
    const Matrix& at(const std::string& name) const;
    bool has(const std::string& name) const { return entries_.count(name) > 0; }

    // One bias-corrected Adam update. Parameters absent from `grads` are
    // treated as having zero gradient. Throws on non-finite gradients.
    void adam_step(const std::map<std::string, Matrix>& grads,
                   const AdamConfig& cfg);

    std::int64_t step_count() const { return step_count_; }

    // Checkpoint format: one row per parameter,
    //   name,rows,cols,v1,v2,...   (17 significant digits, column-major)
    void save_checkpoint(const std::string& path) const;
    void load_checkpoint(const std::string& path);

    // Order is deterministic (lexicographic by name).
    const std::map<std::string, Matrix>& values() const;
    std::map<std::string, Matrix> snapshot() const;
    void restore(const std::map<std::string, Matrix>& snap);

private:
    struct Entry {
        Matrix value;
        Matrix m;
        Matrix v;
    };
    std::map<std::string, Entry> entries_;
    mutable std::map<std::string, Matrix> values_cache_;
    std::int64_t step_count_ = 0;
};

}  // namespace hgrec
