#include "hgrec/semantic.hpp"

#include "hgrec/rng.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace hgrec {

SemanticTable load_semantic_table(const std::string& path, const IdMaps& ids,
                                  int num_items) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open semantic file: " + path);
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error("semantic file is empty: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.rfind("dim=", 0) != 0)
        throw std::runtime_error("semantic file must start with dim=<d_c>");
    SemanticTable table;
    table.dimension = std::stoi(line.substr(4));
    if (table.dimension < 1)
        throw std::runtime_error("semantic dimension must be >= 1");
    table.vectors = Matrix::Zero(num_items, table.dimension);
    table.covered.assign(static_cast<std::size_t>(num_items), false);

    std::size_t row_no = 1;
    while (std::getline(in, line)) {
        ++row_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::size_t tab = line.find('\t');
        if (tab == std::string::npos)
            throw std::runtime_error("semantic parse error at row " +
                                     std::to_string(row_no) +
                                     ": expected raw_item_id<TAB>values");
        const std::string raw_id = line.substr(0, tab);
        auto it = ids.item_index.find(raw_id);
        std::istringstream vals(line.substr(tab + 1));
        std::vector<double> v;
        std::string tok;
        while (std::getline(vals, tok, ',')) {
            std::size_t pos = 0;
            double x = 0;
            try {
                x = std::stod(tok, &pos);
            } catch (const std::exception&) {
                throw std::runtime_error("semantic parse error at row " +
                                         std::to_string(row_no) +
                                         ": bad value '" + tok + "'");
            }
            if (!std::isfinite(x))
                throw std::runtime_error("non-finite semantic value at row " +
                                         std::to_string(row_no));
            v.push_back(x);
        }
        if (static_cast<int>(v.size()) != table.dimension)
            throw std::runtime_error(
                "semantic dimension mismatch at row " + std::to_string(row_no) +
                ": got " + std::to_string(v.size()) + ", expected " +
                std::to_string(table.dimension));
        if (it == ids.item_index.end()) continue;  // unknown id, skipped
        const int idx = it->second;
        for (int c = 0; c < table.dimension; ++c)
            table.vectors(idx, c) = v[static_cast<std::size_t>(c)];
        if (!table.covered[static_cast<std::size_t>(idx)]) {
            table.covered[static_cast<std::size_t>(idx)] = true;
            ++table.covered_count;
        }
    }
    return table;
}

SemanticTable synth_semantic_table(int num_items, int dimension,
                                   std::uint64_t seed, int cluster_count,
                                   double noise_sigma) {
    if (cluster_count < 1)
        throw std::invalid_argument("cluster count must be >= 1");
    SemanticTable table;
    table.dimension = dimension;
    table.vectors = Matrix::Zero(num_items, dimension);
    table.covered.assign(static_cast<std::size_t>(num_items), true);
    table.covered_count = num_items;

    Matrix centroids(cluster_count, dimension);
    auto crng = substream(seed, "semantic_centroids");
    for (int c = 0; c < cluster_count; ++c) {
        for (int j = 0; j < dimension; ++j) centroids(c, j) = gaussian(crng);
        centroids.row(c).normalize();
    }
    auto nrng = substream(seed, "semantic_noise");
    for (int i = 0; i < num_items; ++i) {
        const int c = i % cluster_count;
        Eigen::RowVectorXd v = centroids.row(c);
        for (int j = 0; j < dimension; ++j) v(j) += noise_sigma * gaussian(nrng);
        v.normalize();
        table.vectors.row(i) = v;
    }
    return table;
}

std::vector<std::string> FusionLayer::param_names() const {
    if (mode == FusionMode::ConcatLinear) return {"fusion.W", "fusion.b"};
    return {"fusion.P", "fusion.b", "fusion.s"};
}

void FusionLayer::init_params(ParameterStore& store, std::uint64_t seed) const {
    auto rng = substream(seed, "fusion_init");
    auto glorot = [&rng](int rows, int cols) {
        Matrix w(rows, cols);
        const double s = std::sqrt(2.0 / (rows + cols));
        for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = s * gaussian(rng);
        return w;
    };
    if (mode == FusionMode::ConcatLinear) {
        store.add("fusion.W", glorot(d_id + d_c, d_out));
        store.add("fusion.b", Matrix::Zero(1, d_out));
    } else {
        if (d_id != d_out)
            throw std::invalid_argument("weighted-sum fusion needs d_id == d");
        store.add("fusion.P", glorot(d_c, d_out));
        store.add("fusion.b", Matrix::Zero(1, d_out));
        store.add("fusion.s", Matrix::Constant(1, 1, 0.5));
    }
}

Var FusionLayer::fuse(Tape& tape, Var e_id, const SemanticTable& table,
                      const std::vector<Var>& params) const {
    if (tape.value(e_id).cols() != d_id)
        throw std::invalid_argument("fuse: e_ID width does not match d_id");
    Var sem = tape.leaf(table.vectors);  // constants: no grad consumers
    if (mode == FusionMode::ConcatLinear) {
        Var cat = tape.hcat(e_id, sem);
        return tape.add_rowvec(tape.matmul(cat, params[0]), params[1]);
    }
    Var proj = tape.add_rowvec(tape.matmul(sem, params[0]), params[1]);
    // out = proj + s * (e_ID - proj)  ==  s * e_ID + (1-s) * proj
    Var diff = tape.sub(e_id, proj);
    const double s = tape.value(params[2])(0, 0);
    Var gated = tape.make_node(
        "scale_by_gate", s * tape.value(diff),
        [diff, gate = params[2], s](Tape& t, const Matrix& g) {
            t.accumulate_grad(diff, s * g);
            Matrix gs(1, 1);
            gs(0, 0) = g.cwiseProduct(t.value(diff)).sum();
            t.accumulate_grad(gate, gs);
        });
    return tape.add(proj, gated);
}

}  // namespace hgrec
