#ifndef ANYMODAL_AUTOGRAD_HPP
#define ANYMODAL_AUTOGRAD_HPP

// Reverse-mode autodiff over dense double matrices. One Tape per forward
// pass; nodes are replayed in reverse for backward(). Single-threaded,
// deterministic evaluation order. Gradient work is skipped for subgraphs
// that reach no trainable leaf (frozen weights enter as constants).

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace anymodal {

using Mat = Eigen::MatrixXd;

struct Param {
    std::string name;
    Mat value;
    Mat grad;       // same shape as value, accumulated by Tape::backward
    bool trainable = false;

    void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape {
public:
    struct Var {
        int idx = -1;
        bool valid() const { return idx >= 0; }
    };

    Var constant(Mat v) { return push(std::move(v), false, nullptr); }

    // Frozen params enter the graph as constants: no gradient is ever
    // accumulated for them, which makes partition checks exact.
    Var leaf(Param& p) {
        if (!p.trainable) return constant(p.value);
        if (p.grad.size() == 0) p.zero_grad();
        Param* pp = &p;
        return push(p.value, true, [pp](Tape& t, int i) { pp->grad += t.nodes_[i].grad; });
    }

    bool requires_grad(Var v) const { return nodes_.at(v.idx).needs; }

    Var matmul(Var a, Var b) {
        const Mat& A = val(a);
        const Mat& B = val(b);
        if (A.cols() != B.rows()) throw std::invalid_argument("matmul: inner dims");
        return push(A * B, req(a) || req(b), [a, b](Tape& t, int i) {
            const Mat& g = t.nodes_[i].grad;
            if (t.req(a)) t.accum(a, g * t.val(b).transpose());
            if (t.req(b)) t.accum(b, t.val(a).transpose() * g);
        });
    }

    // a * b^T (attention scores)
    Var matmul_nt(Var a, Var b) {
        const Mat& A = val(a);
        const Mat& B = val(b);
        if (A.cols() != B.cols()) throw std::invalid_argument("matmul_nt: inner dims");
        return push(A * B.transpose(), req(a) || req(b), [a, b](Tape& t, int i) {
            const Mat& g = t.nodes_[i].grad;
            if (t.req(a)) t.accum(a, g * t.val(b));
            if (t.req(b)) t.accum(b, g.transpose() * t.val(a));
        });
    }

    Var add(Var a, Var b) {
        const Mat& A = val(a);
        const Mat& B = val(b);
        if (A.rows() != B.rows() || A.cols() != B.cols())
            throw std::invalid_argument("add: shape mismatch");
        return push(A + B, req(a) || req(b), [a, b](Tape& t, int i) {
            const Mat& g = t.nodes_[i].grad;
            if (t.req(a)) t.accum(a, g);
            if (t.req(b)) t.accum(b, g);
        });
    }

    // b is a 1 x d row broadcast over the rows of a.
    Var add_row(Var a, Var b) {
        const Mat& A = val(a);
        const Mat& B = val(b);
        if (B.rows() != 1 || B.cols() != A.cols())
            throw std::invalid_argument("add_row: bias shape");
        Mat out = A.rowwise() + B.row(0);
        return push(std::move(out), req(a) || req(b), [a, b](Tape& t, int i) {
            const Mat& g = t.nodes_[i].grad;
            if (t.req(a)) t.accum(a, g);
            if (t.req(b)) t.accum(b, g.colwise().sum());
        });
    }

    Var scale(Var a, double s) {
        return push(val(a) * s, req(a), [a, s](Tape& t, int i) {
            if (t.req(a)) t.accum(a, t.nodes_[i].grad * s);
        });
    }

    // Row-wise softmax; causal=true masks column j > row r.
    Var softmax_rows(Var a, bool causal = false) {
        Mat A = val(a);
        const Eigen::Index R = A.rows(), C = A.cols();
        if (causal) {
            for (Eigen::Index r = 0; r < R; ++r)
                for (Eigen::Index c = r + 1; c < C; ++c)
                    A(r, c) = -std::numeric_limits<double>::infinity();
        }
        Mat P(R, C);
        for (Eigen::Index r = 0; r < R; ++r) {
            double m = A.row(r).maxCoeff();
            Eigen::ArrayXd e = (A.row(r).array() - m).exp();
            P.row(r) = e / e.sum();
        }
        return push(std::move(P), req(a), [a](Tape& t, int i) {
            if (!t.req(a)) return;
            const Mat& g = t.nodes_[i].grad;
            const Mat& p = t.nodes_[i].value;
            Mat dA(p.rows(), p.cols());
            for (Eigen::Index r = 0; r < p.rows(); ++r) {
                double dot = g.row(r).dot(p.row(r));
                dA.row(r) = p.row(r).cwiseProduct(g.row(r)) - dot * p.row(r);
            }
            t.accum(a, dA);
        });
    }

    // Per-row layer norm with gain/bias (both 1 x d).
    Var layernorm(Var x, Var gain, Var bias, double eps = 1e-5) {
        const Mat& X = val(x);
        const Mat& G = val(gain);
        const Mat& B = val(bias);
        const Eigen::Index R = X.rows(), D = X.cols();
        Mat xhat(R, D), out(R, D);
        Eigen::VectorXd inv_std(R);
        for (Eigen::Index r = 0; r < R; ++r) {
            double mu = X.row(r).mean();
            double var = (X.row(r).array() - mu).square().mean();
            double is = 1.0 / std::sqrt(var + eps);
            inv_std(r) = is;
            xhat.row(r) = (X.row(r).array() - mu) * is;
            out.row(r) = xhat.row(r).cwiseProduct(G.row(0)) + B.row(0);
        }
        Mat xh = std::move(xhat);
        bool r = req(x) || req(gain) || req(bias);
        return push(std::move(out),
                    r, [x, gain, bias, xh = std::move(xh), is = std::move(inv_std)](Tape& t, int i) {
            const Mat& g = t.nodes_[i].grad;
            const Mat& G = t.val(gain);
            const Eigen::Index R = g.rows(), D = g.cols();
            if (t.req(x)) {
                Mat dX(R, D);
                for (Eigen::Index r = 0; r < R; ++r) {
                    Eigen::RowVectorXd gy = g.row(r).cwiseProduct(G.row(0));
                    double m1 = gy.mean();
                    double m2 = gy.cwiseProduct(xh.row(r)).mean();
                    dX.row(r) = is(r) * (gy.array() - m1 - xh.row(r).array() * m2);
                }
                t.accum(x, dX);
            }
            if (t.req(gain)) {
                Eigen::RowVectorXd dG = Eigen::RowVectorXd::Zero(D);
                for (Eigen::Index r = 0; r < R; ++r) dG += g.row(r).cwiseProduct(xh.row(r));
                t.accum(gain, dG);
            }
            if (t.req(bias)) t.accum(bias, g.colwise().sum());
        });
    }

    // Exact GELU: x * Phi(x).
    Var gelu(Var a) {
        const Mat& A = val(a);
        Mat out = A.unaryExpr([](double v) {
            return 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
        });
        return push(std::move(out), req(a), [a](Tape& t, int i) {
            if (!t.req(a)) return;
            const Mat& g = t.nodes_[i].grad;
            const Mat& A = t.val(a);
            Mat d = A.unaryExpr([](double v) {
                double phi = std::exp(-0.5 * v * v) / std::sqrt(2.0 * M_PI);
                double Phi = 0.5 * (1.0 + std::erf(v / std::sqrt(2.0)));
                return Phi + v * phi;
            });
            t.accum(a, g.cwiseProduct(d));
        });
    }

    Var gather_rows(Var table, const std::vector<int>& rows) {
        const Mat& T = val(table);
        Mat out(static_cast<Eigen::Index>(rows.size()), T.cols());
        for (size_t r = 0; r < rows.size(); ++r) {
            if (rows[r] < 0 || rows[r] >= T.rows())
                throw std::out_of_range("gather_rows: index " + std::to_string(rows[r]));
            out.row(static_cast<Eigen::Index>(r)) = T.row(rows[r]);
        }
        return push(std::move(out), req(table), [table, rows](Tape& t, int i) {
            if (!t.req(table)) return;
            const Mat& g = t.nodes_[i].grad;
            Mat dT = Mat::Zero(t.val(table).rows(), t.val(table).cols());
            for (size_t r = 0; r < rows.size(); ++r)
                dT.row(rows[r]) += g.row(static_cast<Eigen::Index>(r));
            t.accum(table, dT);
        });
    }

    Var concat_rows(const std::vector<Var>& parts) {
        if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
        Eigen::Index rows = 0;
        const Eigen::Index cols = val(parts[0]).cols();
        bool r = false;
        for (Var p : parts) {
            if (val(p).cols() != cols) throw std::invalid_argument("concat_rows: cols");
            rows += val(p).rows();
            r = r || req(p);
        }
        Mat out(rows, cols);
        Eigen::Index at = 0;
        for (Var p : parts) {
            out.middleRows(at, val(p).rows()) = val(p);
            at += val(p).rows();
        }
        return push(std::move(out), r, [parts](Tape& t, int i) {
            const Mat& g = t.nodes_[i].grad;
            Eigen::Index at = 0;
            for (Var p : parts) {
                Eigen::Index n = t.val(p).rows();
                if (t.req(p)) t.accum(p, g.middleRows(at, n));
                at += n;
            }
        });
    }

    Var slice_rows(Var a, Eigen::Index r0, Eigen::Index n) {
        const Mat& A = val(a);
        if (r0 < 0 || r0 + n > A.rows()) throw std::out_of_range("slice_rows");
        return push(A.middleRows(r0, n), req(a), [a, r0, n](Tape& t, int i) {
            if (!t.req(a)) return;
            Mat dA = Mat::Zero(t.val(a).rows(), t.val(a).cols());
            dA.middleRows(r0, n) = t.nodes_[i].grad;
            t.accum(a, dA);
        });
    }

    Var slice_cols(Var a, Eigen::Index c0, Eigen::Index n) {
        const Mat& A = val(a);
        if (c0 < 0 || c0 + n > A.cols()) throw std::out_of_range("slice_cols");
        return push(A.middleCols(c0, n), req(a), [a, c0, n](Tape& t, int i) {
            if (!t.req(a)) return;
            Mat dA = Mat::Zero(t.val(a).rows(), t.val(a).cols());
            dA.middleCols(c0, n) = t.nodes_[i].grad;
            t.accum(a, dA);
        });
    }

    Var concat_cols(const std::vector<Var>& parts) {
        if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
        const Eigen::Index rows = val(parts[0]).rows();
        Eigen::Index cols = 0;
        bool r = false;
        for (Var p : parts) {
            if (val(p).rows() != rows) throw std::invalid_argument("concat_cols: rows");
            cols += val(p).cols();
            r = r || req(p);
        }
        Mat out(rows, cols);
        Eigen::Index at = 0;
        for (Var p : parts) {
            out.middleCols(at, val(p).cols()) = val(p);
            at += val(p).cols();
        }
        return push(std::move(out), r, [parts](Tape& t, int i) {
            const Mat& g = t.nodes_[i].grad;
            Eigen::Index at = 0;
            for (Var p : parts) {
                Eigen::Index n = t.val(p).cols();
                if (t.req(p)) t.accum(p, g.middleCols(at, n));
                at += n;
            }
        });
    }

    // Rows of `a` averaged over contiguous chunks given by boundaries
    // [b[j], b[j+1]). All chunks must be non-empty.
    Var chunk_mean_rows(Var a, const std::vector<Eigen::Index>& bounds) {
        const Mat& A = val(a);
        const size_t k = bounds.size() - 1;
        Mat out(static_cast<Eigen::Index>(k), A.cols());
        for (size_t j = 0; j < k; ++j) {
            Eigen::Index n = bounds[j + 1] - bounds[j];
            if (n <= 0) throw std::invalid_argument("chunk_mean_rows: empty chunk");
            out.row(static_cast<Eigen::Index>(j)) =
                A.middleRows(bounds[j], n).colwise().mean();
        }
        return push(std::move(out), req(a), [a, bounds](Tape& t, int i) {
            if (!t.req(a)) return;
            const Mat& g = t.nodes_[i].grad;
            Mat dA = Mat::Zero(t.val(a).rows(), t.val(a).cols());
            for (size_t j = 0; j + 1 < bounds.size(); ++j) {
                Eigen::Index n = bounds[j + 1] - bounds[j];
                for (Eigen::Index r = 0; r < n; ++r)
                    dA.row(bounds[j] + r) = g.row(static_cast<Eigen::Index>(j)) / double(n);
            }
            t.accum(a, dA);
        });
    }

    // Mean NLL over masked positions. Position i with mask[i]=true is
    // predicted from logits row i-1 against targets[i]. mask[0] must be false.
    Var next_token_nll(Var logits, const std::vector<int>& targets,
                       const std::vector<bool>& mask) {
        const Mat& L = val(logits);
        if (targets.size() != mask.size() ||
            static_cast<Eigen::Index>(targets.size()) != L.rows())
            throw std::invalid_argument("next_token_nll: length mismatch");
        if (!mask.empty() && mask[0])
            throw std::invalid_argument("next_token_nll: mask[0] has no prefix");
        int m = 0;
        double total = 0.0;
        for (size_t i = 1; i < mask.size(); ++i) {
            if (!mask[i]) continue;
            int tgt = targets[i];
            if (tgt < 0 || tgt >= L.cols())
                throw std::out_of_range("next_token_nll: target id");
            const auto row = L.row(static_cast<Eigen::Index>(i - 1));
            double mx = row.maxCoeff();
            double lse = mx + std::log((row.array() - mx).exp().sum());
            total += lse - row(tgt);
            ++m;
        }
        if (m == 0) throw std::invalid_argument("next_token_nll: empty loss mask");
        Mat out(1, 1);
        out(0, 0) = total / m;
        return push(std::move(out), req(logits), [logits, targets, mask, m](Tape& t, int i) {
            if (!t.req(logits)) return;
            double g = t.nodes_[i].grad(0, 0);
            const Mat& L = t.val(logits);
            Mat dL = Mat::Zero(L.rows(), L.cols());
            for (size_t p = 1; p < mask.size(); ++p) {
                if (!mask[p]) continue;
                const auto row = L.row(static_cast<Eigen::Index>(p - 1));
                double mx = row.maxCoeff();
                Eigen::ArrayXd e = (row.array() - mx).exp();
                Eigen::ArrayXd smax = e / e.sum();
                dL.row(static_cast<Eigen::Index>(p - 1)) += (g / m) * smax.matrix().transpose();
                dL(static_cast<Eigen::Index>(p - 1), targets[p]) -= g / m;
            }
            t.accum(logits, dL);
        });
    }

    const Mat& val(Var v) const { return nodes_.at(v.idx).value; }

    void backward(Var loss) {
        if (val(loss).size() != 1) throw std::invalid_argument("backward: non-scalar loss");
        if (!req(loss)) return; // loss does not reach any trainable leaf
        auto& seed = nodes_[loss.idx];
        seed.grad.setOnes(1, 1);
        for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
            Node& n = nodes_[static_cast<size_t>(i)];
            if (n.back && n.needs && n.grad.size() != 0) n.back(*this, i);
        }
    }

private:
    struct Node {
        Mat value;
        Mat grad; // lazily allocated on first accumulation
        bool needs = false;
        std::function<void(Tape&, int)> back;
    };

    bool req(Var v) const { return nodes_[static_cast<size_t>(v.idx)].needs; }

    Var push(Mat v, bool needs, std::function<void(Tape&, int)> back) {
        Node n;
        n.value = std::move(v);
        n.needs = needs;
        n.back = std::move(back);
        nodes_.push_back(std::move(n));
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    void accum(Var v, const Mat& g) {
        Node& n = nodes_[static_cast<size_t>(v.idx)];
        if (n.grad.size() == 0)
            n.grad = g;
        else
            n.grad += g;
    }

    std::vector<Node> nodes_;
};

using Var = Tape::Var;

} // namespace anymodal

#endif
