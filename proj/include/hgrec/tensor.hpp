#pragma once
// Minimal reverse-mode autodiff over dense double matrices.
//
// Define-by-run: a Tape records one computation per training step and is
// discarded afterwards. Every kernel stores its local backward rule as a
// closure; backward() walks nodes in reverse creation order, which is a
// valid reverse topological order for a define-by-run graph.

#include <Eigen/Dense>

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace hgrec {

using Matrix = Eigen::MatrixXd;

// Handle into a Tape. Only valid for the tape that created it.
struct Var {
    int idx = -1;
    bool valid() const { return idx >= 0; }
};

class Tape {
public:
    // Leaf without gradient tracking of its own inputs (constants still
    // receive gradients so callers can read d(root)/d(leaf)).
    Var leaf(Matrix value);

    // --- elementwise / linear kernels ---
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var scale(Var a, double c);
    Var hadamard(Var a, Var b);
    Var matmul(Var a, Var b);
    Var transpose(Var a);
    Var hcat(Var a, Var b);        // row-wise concatenation of columns
    Var vcat(Var a, Var b);        // stack rows
    Var gather_rows(Var a, std::vector<int> rows);
    Var sum(Var a);                // 1x1
    Var mean(Var a);               // 1x1
    Var exp(Var a);
    Var log(Var a);
    Var clamp(Var a, double lo, double hi);  // zero gradient outside [lo,hi]
    Var tanh(Var a);
    Var softplus(Var a);
    Var l2_normalize_rows(Var a);  // zero rows map to zero rows
    Var dot(Var a, Var b);         // 1x1, same-shape inputs
    Var rowwise_dot(Var a, Var b); // n x 1
    Var softmax(Var a);            // vector (n x 1 or 1 x n)
    Var log_softmax(Var a);        // vector
    Var add_rowvec(Var a, Var b);  // broadcast 1 x n bias over rows of a
    // log N(x | mu, sigma^2) with sigma = exp(log_sigma); mu, log_sigma 1x1
    Var gaussian_log_density(Var mu, Var log_sigma, double x);

    // Extension point for ops with bespoke backward rules (sparse
    // propagation lives in the backbone). `back` receives the output
    // gradient and must accumulate into parents via accumulate_grad().
    Var make_node(const char* tag, Matrix value,
                  std::function<void(Tape&, const Matrix&)> back);
    void accumulate_grad(Var v, const Matrix& g);

    void backward(Var root);  // root must be 1x1
    void zero_grad();

    const Matrix& value(Var v) const { return node(v).value; }
    const Matrix& grad(Var v) const { return node(v).grad; }
    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        std::function<void(Tape&, const Matrix&)> back;
        const char* op;
        bool touched = false;
    };

    Node& node(Var v) { return nodes_.at(static_cast<std::size_t>(v.idx)); }
    const Node& node(Var v) const {
        return nodes_.at(static_cast<std::size_t>(v.idx));
    }
    Var push(const char* tag, Matrix value,
             std::function<void(Tape&, const Matrix&)> back);
    static void check_same_shape(const char* op, const Matrix& a,
                                 const Matrix& b);
    static void check_vector(const char* op, const Matrix& a);

    std::vector<Node> nodes_;
};

[[noreturn]] void shape_error(const char* op, const Matrix& a, const Matrix& b);

}  // namespace hgrec
