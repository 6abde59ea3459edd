#include "hgrec/tensor.hpp"

#include <cmath>
#include <sstream>
#include <utility>

namespace hgrec {

namespace {
std::string shape_str(const Matrix& m) {
    std::ostringstream os;
    os << m.rows() << "x" << m.cols();
    return os.str();
}
}  // namespace

void shape_error(const char* op, const Matrix& a, const Matrix& b) {
    throw std::invalid_argument(std::string("shape mismatch in ") + op + ": " +
                                shape_str(a) + " vs " + shape_str(b));
}

void Tape::check_same_shape(const char* op, const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error(op, a, b);
}

void Tape::check_vector(const char* op, const Matrix& a) {
    if (a.rows() != 1 && a.cols() != 1)
        throw std::invalid_argument(std::string(op) +
                                    " expects a vector, got " + shape_str(a));
}

Var Tape::push(const char* tag, Matrix value,
               std::function<void(Tape&, const Matrix&)> back) {
    Node n;
    n.grad = Matrix::Zero(value.rows(), value.cols());
    n.value = std::move(value);
    n.back = std::move(back);
    n.op = tag;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::make_node(const char* tag, Matrix value,
                    std::function<void(Tape&, const Matrix&)> back) {
    return push(tag, std::move(value), std::move(back));
}

void Tape::accumulate_grad(Var v, const Matrix& g) {
    Node& n = node(v);
    check_same_shape("accumulate_grad", n.grad, g);
    n.grad += g;
    n.touched = true;
}

Var Tape::leaf(Matrix value) { return push("leaf", std::move(value), nullptr); }

Var Tape::add(Var a, Var b) {
    check_same_shape("add", value(a), value(b));
    return push("add", value(a) + value(b), [a, b](Tape& t, const Matrix& g) {
        t.accumulate_grad(a, g);
        t.accumulate_grad(b, g);
    });
}

Var Tape::sub(Var a, Var b) {
    check_same_shape("sub", value(a), value(b));
    return push("sub", value(a) - value(b), [a, b](Tape& t, const Matrix& g) {
        t.accumulate_grad(a, g);
        t.accumulate_grad(b, -g);
    });
}

Var Tape::scale(Var a, double c) {
    return push("scale", value(a) * c, [a, c](Tape& t, const Matrix& g) {
        t.accumulate_grad(a, c * g);
    });
}

Var Tape::hadamard(Var a, Var b) {
    check_same_shape("hadamard", value(a), value(b));
    return push("hadamard", value(a).cwiseProduct(value(b)),
                [a, b](Tape& t, const Matrix& g) {
                    t.accumulate_grad(a, g.cwiseProduct(t.value(b)));
                    t.accumulate_grad(b, g.cwiseProduct(t.value(a)));
                });
}

Var Tape::matmul(Var a, Var b) {
    if (value(a).cols() != value(b).rows()) shape_error("matmul", value(a), value(b));
    return push("matmul", value(a) * value(b), [a, b](Tape& t, const Matrix& g) {
        t.accumulate_grad(a, g * t.value(b).transpose());
        t.accumulate_grad(b, t.value(a).transpose() * g);
    });
}

Var Tape::transpose(Var a) {
    return push("transpose", value(a).transpose(),
                [a](Tape& t, const Matrix& g) {
                    t.accumulate_grad(a, g.transpose());
                });
}

Var Tape::hcat(Var a, Var b) {
    if (value(a).rows() != value(b).rows()) shape_error("hcat", value(a), value(b));
    Matrix out(value(a).rows(), value(a).cols() + value(b).cols());
    out << value(a), value(b);
    const Eigen::Index ca = value(a).cols();
    return push("hcat", std::move(out), [a, b, ca](Tape& t, const Matrix& g) {
        t.accumulate_grad(a, g.leftCols(ca));
        t.accumulate_grad(b, g.rightCols(g.cols() - ca));
    });
}

Var Tape::vcat(Var a, Var b) {
    if (value(a).cols() != value(b).cols()) shape_error("vcat", value(a), value(b));
    Matrix out(value(a).rows() + value(b).rows(), value(a).cols());
    out << value(a), value(b);
    const Eigen::Index ra = value(a).rows();
    return push("vcat", std::move(out), [a, b, ra](Tape& t, const Matrix& g) {
        t.accumulate_grad(a, g.topRows(ra));
        t.accumulate_grad(b, g.bottomRows(g.rows() - ra));
    });
}

Var Tape::gather_rows(Var a, std::vector<int> rows) {
    const Matrix& src = value(a);
    Matrix out(static_cast<Eigen::Index>(rows.size()), src.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r] < 0 || rows[r] >= src.rows())
            throw std::invalid_argument("gather_rows: row index out of range");
        out.row(static_cast<Eigen::Index>(r)) = src.row(rows[r]);
    }
    return push("gather_rows", std::move(out),
                [a, rows = std::move(rows)](Tape& t, const Matrix& g) {
                    Matrix ga = Matrix::Zero(t.value(a).rows(), t.value(a).cols());
                    for (std::size_t r = 0; r < rows.size(); ++r)
                        ga.row(rows[r]) += g.row(static_cast<Eigen::Index>(r));
                    t.accumulate_grad(a, ga);
                });
}

Var Tape::sum(Var a) {
    Matrix out(1, 1);
    out(0, 0) = value(a).sum();
    return push("sum", std::move(out), [a](Tape& t, const Matrix& g) {
        t.accumulate_grad(a, Matrix::Constant(t.value(a).rows(),
                                              t.value(a).cols(), g(0, 0)));
    });
}

Var Tape::mean(Var a) {
    const double n = static_cast<double>(value(a).size());
    Matrix out(1, 1);
    out(0, 0) = value(a).sum() / n;
    return push("mean", std::move(out), [a, n](Tape& t, const Matrix& g) {
        t.accumulate_grad(a, Matrix::Constant(t.value(a).rows(),
                                              t.value(a).cols(), g(0, 0) / n));
    });
}

Var Tape::exp(Var a) {
    Var out = push("exp", value(a).array().exp().matrix(), nullptr);
    Var self = out;
    node(out).back = [a, self](Tape& t, const Matrix& g) {
        t.accumulate_grad(a, g.cwiseProduct(t.value(self)));
    };
    return out;
}

Var Tape::log(Var a) {
    return push("log", value(a).array().log().matrix(),
                [a](Tape& t, const Matrix& g) {
                    t.accumulate_grad(a, g.cwiseQuotient(t.value(a)));
                });
}

Var Tape::clamp(Var a, double lo, double hi) {
    return push("clamp", value(a).array().max(lo).min(hi).matrix(),
                [a, lo, hi](Tape& t, const Matrix& g) {
                    const Matrix& v = t.value(a);
                    Matrix ga = g;
                    for (Eigen::Index i = 0; i < v.size(); ++i)
                        if (v(i) < lo || v(i) > hi) ga(i) = 0.0;
                    t.accumulate_grad(a, ga);
                });
}

Var Tape::tanh(Var a) {
    Var out = push("tanh", value(a).array().tanh().matrix(), nullptr);
    Var self = out;
    node(out).back = [a, self](Tape& t, const Matrix& g) {
        const Matrix& y = t.value(self);
        t.accumulate_grad(a, g.cwiseProduct((1.0 - y.array().square()).matrix()));
    };
    return out;
}

Var Tape::softplus(Var a) {
    const Matrix& v = value(a);
    Matrix out(v.rows(), v.cols());
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        const double x = v(i);
        out(i) = x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    }
    return push("softplus", std::move(out), [a](Tape& t, const Matrix& g) {
        const Matrix& x = t.value(a);
        Matrix ga(x.rows(), x.cols());
        for (Eigen::Index i = 0; i < x.size(); ++i)
            ga(i) = g(i) / (1.0 + std::exp(-x(i)));
        t.accumulate_grad(a, ga);
    });
}

Var Tape::l2_normalize_rows(Var a) {
    const Matrix& v = value(a);
    Matrix out(v.rows(), v.cols());
    std::vector<double> norms(static_cast<std::size_t>(v.rows()));
    for (Eigen::Index r = 0; r < v.rows(); ++r) {
        const double n = v.row(r).norm();
        norms[static_cast<std::size_t>(r)] = n;
        out.row(r) = n > 0 ? (v.row(r) / n).eval() : v.row(r);
    }
    return push("l2_normalize_rows", std::move(out),
                [a, norms = std::move(norms)](Tape& t, const Matrix& g) {
                    const Matrix& v = t.value(a);
                    Matrix ga = Matrix::Zero(v.rows(), v.cols());
                    for (Eigen::Index r = 0; r < v.rows(); ++r) {
                        const double n = norms[static_cast<std::size_t>(r)];
                        if (n == 0.0) continue;  // zero rows stay zero
                        Eigen::RowVectorXd y = v.row(r) / n;
                        // quotient rule: d(x/||x||) = (I - y y^T)/||x||
                        ga.row(r) = (g.row(r) - y * (y.dot(g.row(r)))) / n;
                    }
                    t.accumulate_grad(a, ga);
                });
}

Var Tape::dot(Var a, Var b) {
    check_same_shape("dot", value(a), value(b));
    Matrix out(1, 1);
    out(0, 0) = value(a).cwiseProduct(value(b)).sum();
    return push("dot", std::move(out), [a, b](Tape& t, const Matrix& g) {
        t.accumulate_grad(a, g(0, 0) * t.value(b));
        t.accumulate_grad(b, g(0, 0) * t.value(a));
    });
}

Var Tape::rowwise_dot(Var a, Var b) {
    check_same_shape("rowwise_dot", value(a), value(b));
    Matrix out = value(a).cwiseProduct(value(b)).rowwise().sum();
    return push("rowwise_dot", std::move(out), [a, b](Tape& t, const Matrix& g) {
        Matrix gb = t.value(a);
        Matrix ga = t.value(b);
        for (Eigen::Index r = 0; r < ga.rows(); ++r) {
            ga.row(r) *= g(r, 0);
            gb.row(r) *= g(r, 0);
        }
        t.accumulate_grad(a, ga);
        t.accumulate_grad(b, gb);
    });
}

Var Tape::softmax(Var a) {
    check_vector("softmax", value(a));
    const Matrix& v = value(a);
    const double m = v.maxCoeff();
    Matrix e = (v.array() - m).exp().matrix();
    Matrix out = e / e.sum();
    Var node_out = push("softmax", std::move(out), nullptr);
    Var self = node_out;
    node(node_out).back = [a, self](Tape& t, const Matrix& g) {
        const Matrix& s = t.value(self);
        const double sg = s.cwiseProduct(g).sum();
        t.accumulate_grad(a, s.cwiseProduct((g.array() - sg).matrix()));
    };
    return node_out;
}

Var Tape::log_softmax(Var a) {
    check_vector("log_softmax", value(a));
    const Matrix& v = value(a);
    const double m = v.maxCoeff();
    const double lse = m + std::log((v.array() - m).exp().sum());
    Matrix out = (v.array() - lse).matrix();
    Var node_out = push("log_softmax", std::move(out), nullptr);
    Var self = node_out;
    node(node_out).back = [a, self](Tape& t, const Matrix& g) {
        const Matrix p = t.value(self).array().exp().matrix();
        const double gsum = g.sum();
        t.accumulate_grad(a, g - gsum * p);
    };
    return node_out;
}

Var Tape::add_rowvec(Var a, Var b) {
    if (value(b).rows() != 1 || value(b).cols() != value(a).cols())
        shape_error("add_rowvec", value(a), value(b));
    Matrix out = value(a);
    out.rowwise() += value(b).row(0);
    return push("add_rowvec", std::move(out), [a, b](Tape& t, const Matrix& g) {
        t.accumulate_grad(a, g);
        t.accumulate_grad(b, g.colwise().sum());
    });
}

Var Tape::gaussian_log_density(Var mu, Var log_sigma, double x) {
    if (value(mu).size() != 1 || value(log_sigma).size() != 1)
        throw std::invalid_argument("gaussian_log_density expects 1x1 mu/log_sigma");
    const double m = value(mu)(0, 0);
    const double ls = value(log_sigma)(0, 0);
    const double s2 = std::exp(2.0 * ls);
    Matrix out(1, 1);
    out(0, 0) = -0.5 * std::log(2.0 * M_PI) - ls - (x - m) * (x - m) / (2.0 * s2);
    return push("gaussian_log_density", std::move(out),
                [mu, log_sigma, x, m, s2](Tape& t, const Matrix& g) {
                    Matrix gm(1, 1), gs(1, 1);
                    gm(0, 0) = g(0, 0) * (x - m) / s2;
                    gs(0, 0) = g(0, 0) * (-1.0 + (x - m) * (x - m) / s2);
                    t.accumulate_grad(mu, gm);
                    t.accumulate_grad(log_sigma, gs);
                });
}

void Tape::zero_grad() {
    for (Node& n : nodes_) {
        n.grad.setZero();
        n.touched = false;
    }
}

void Tape::backward(Var root) {
    Node& r = node(root);
    if (r.value.size() != 1)
        throw std::invalid_argument("backward: root must be scalar (1x1)");
    r.grad(0, 0) = 1.0;
    r.touched = true;
    for (int i = root.idx; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (n.touched && n.back) n.back(*this, n.grad);
    }
}

}  // namespace hgrec
