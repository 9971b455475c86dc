#ifndef TOPICSUM_AUTODIFF_HPP
#define TOPICSUM_AUTODIFF_HPP

#include <cassert>
#include <cmath>
#include <functional>
#include <iostream>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace topicsum::ad {

using Mat = Eigen::MatrixXd;

/// Handle into a Tape.
struct Var {
  int i = -1;
  bool valid() const { return i >= 0; }
};

/**
 * Define-by-run reverse-mode tape over dense double matrices. Values are
 * computed eagerly as nodes are created; backward() replays the recorded
 * closures in reverse. With gradients disabled the tape only stores values,
 * which is the inference mode.
 *
 * All operations are deterministic; repeated forward passes over identical
 * inputs produce bit-identical values.
 */
class Tape {
public:
  explicit Tape(bool grad_enabled = true) : grad_on_(grad_enabled) {}

  // Test hook: replaces the ReLU derivative with a constant 1, which is wrong
  // for negative pre-activations. Used to prove the gradient checker catches
  // a broken backward pass.
  static inline bool relu_backward_fault = false;

  bool grad_enabled() const { return grad_on_; }
  std::size_t size() const { return nodes_.size(); }

  Var constant(Mat v) { return {push(std::move(v), false, nullptr)}; }

  Var leaf(Mat v) { return {push(std::move(v), grad_on_, nullptr)}; }

  const Mat& val(Var x) const { return nodes_.at(x.i).value; }

  /// Gradient of the last backward() target w.r.t. node x; zero matrix if the
  /// node did not participate.
  Mat grad_of(Var x) const {
    const Node& n = nodes_.at(x.i);
    if (n.grad.size() == 0) return Mat::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  // -- arithmetic ----------------------------------------------------------

  Var add(Var a, Var b) {
    const Mat& av = val(a);
    const Mat& bv = val(b);
    assert(av.rows() == bv.rows() && av.cols() == bv.cols());
    return unary_or_binary(av + bv, a, b, [a, b](Tape& t, const Mat& g) {
      t.accumulate(a, g);
      t.accumulate(b, g);
    });
  }

  /// a (m x n) plus a broadcast row vector (1 x n).
  Var add_row(Var a, Var row) {
    const Mat& av = val(a);
    const Mat& rv = val(row);
    assert(rv.rows() == 1 && rv.cols() == av.cols());
    Mat out = av;
    out.rowwise() += rv.row(0);
    return unary_or_binary(std::move(out), a, row, [a, row](Tape& t, const Mat& g) {
      t.accumulate(a, g);
      t.accumulate(row, g.colwise().sum());
    });
  }

  Var scale(Var a, double s) {
    return unary(val(a) * s, a, [a, s](Tape& t, const Mat& g) {
      t.accumulate(a, g * s);
    });
  }

  Var mul(Var a, Var b) {
    const Mat& av = val(a);
    const Mat& bv = val(b);
    assert(av.rows() == bv.rows() && av.cols() == bv.cols());
    return unary_or_binary(av.cwiseProduct(bv), a, b,
                           [a, b](Tape& t, const Mat& g) {
                             t.accumulate(a, g.cwiseProduct(t.val(b)));
                             t.accumulate(b, g.cwiseProduct(t.val(a)));
                           });
  }

  Var matmul(Var a, Var b, bool ta = false, bool tb = false) {
    assert(!(ta && tb));
    const Mat& av = val(a);
    const Mat& bv = val(b);
    Mat out;
    if (ta) {
      out = av.transpose() * bv;
    } else if (tb) {
      out = av * bv.transpose();
    } else {
      out = av * bv;
    }
    return unary_or_binary(std::move(out), a, b,
                           [a, b, ta, tb](Tape& t, const Mat& g) {
                             const Mat& A = t.val(a);
                             const Mat& B = t.val(b);
                             if (ta) {
                               t.accumulate(a, B * g.transpose());
                               t.accumulate(b, A * g);
                             } else if (tb) {
                               t.accumulate(a, g * B);
                               t.accumulate(b, g.transpose() * A);
                             } else {
                               t.accumulate(a, g * B.transpose());
                               t.accumulate(b, A.transpose() * g);
                             }
                           });
  }

  // -- nonlinearities ------------------------------------------------------

  Var relu(Var a) {
    Mat out = val(a).cwiseMax(0.0);
    return unary(std::move(out), a, [a](Tape& t, const Mat& g) {
      if (relu_backward_fault) {
        t.accumulate(a, g);
        return;
      }
      const Mat mask = (t.val(a).array() > 0.0).cast<double>();
      t.accumulate(a, g.cwiseProduct(mask));
    });
  }

  Var softmax_rows(Var a) {
    const Mat& av = val(a);
    Mat out(av.rows(), av.cols());
    for (Eigen::Index r = 0; r < av.rows(); ++r) {
      const double mx = av.row(r).maxCoeff();
      Eigen::RowVectorXd e = (av.row(r).array() - mx).exp();
      out.row(r) = e / e.sum();
    }
    const int self = next_index();
    return unary(std::move(out), a, [a, self](Tape& t, const Mat& g) {
      const Mat& y = t.nodes_[self].value;
      Mat da(y.rows(), y.cols());
      for (Eigen::Index r = 0; r < y.rows(); ++r) {
        const double dot = g.row(r).dot(y.row(r));
        da.row(r) = (g.row(r).array() - dot) * y.row(r).array();
      }
      t.accumulate(a, da);
    });
  }

  /// y = (x - mean) / sqrt(var + eps) .* gain + bias, rowwise.
  Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5) {
    const Mat& xv = val(x);
    const Mat& gv = val(gain);
    const Mat& bv = val(bias);
    assert(gv.rows() == 1 && bv.rows() == 1);
    assert(gv.cols() == xv.cols() && bv.cols() == xv.cols());
    const Eigen::Index d = xv.cols();
    Mat xhat(xv.rows(), d);
    Eigen::VectorXd inv_std(xv.rows());
    for (Eigen::Index r = 0; r < xv.rows(); ++r) {
      const double mean = xv.row(r).mean();
      const double var = (xv.row(r).array() - mean).square().mean();
      const double is = 1.0 / std::sqrt(var + eps);
      inv_std(r) = is;
      xhat.row(r) = (xv.row(r).array() - mean) * is;
    }
    Mat out = xhat;
    out.array().rowwise() *= gv.row(0).array();
    out.rowwise() += bv.row(0);
    return unary_or_ternary(
        std::move(out), x, gain, bias,
        [x, gain, bias, xhat, inv_std](Tape& t, const Mat& g) {
          const Eigen::Index d = xhat.cols();
          Mat dx(xhat.rows(), d);
          Eigen::RowVectorXd dgain = Eigen::RowVectorXd::Zero(d);
          Eigen::RowVectorXd dbias = Eigen::RowVectorXd::Zero(d);
          const auto& gv = t.val(gain);
          for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
            const Eigen::ArrayXd h =
                g.row(r).array().transpose() * gv.row(0).array().transpose();
            const double mh = h.mean();
            const double mhx = (h * xhat.row(r).array().transpose()).mean();
            dx.row(r) = ((h - mh - xhat.row(r).array().transpose() * mhx) *
                         inv_std(r))
                            .transpose();
            dgain.array() += g.row(r).array() * xhat.row(r).array();
            dbias += g.row(r);
          }
          t.accumulate(x, dx);
          t.accumulate(gain, dgain);
          t.accumulate(bias, dbias);
        });
  }

  // -- reshaping and selection ---------------------------------------------

  Var gather_rows(Var table, std::vector<int> ids) {
    const Mat& tv = val(table);
    Mat out(static_cast<Eigen::Index>(ids.size()), tv.cols());
    for (std::size_t r = 0; r < ids.size(); ++r) {
      if (ids[r] < 0 || ids[r] >= tv.rows()) {
        throw std::out_of_range("gather_rows: id " + std::to_string(ids[r]) +
                                " out of range for table with " +
                                std::to_string(tv.rows()) + " rows");
      }
      out.row(static_cast<Eigen::Index>(r)) = tv.row(ids[r]);
    }
    return unary(std::move(out), table,
                 [table, ids = std::move(ids)](Tape& t, const Mat& g) {
                   Mat dt = Mat::Zero(t.val(table).rows(), t.val(table).cols());
                   for (std::size_t r = 0; r < ids.size(); ++r) {
                     dt.row(ids[r]) += g.row(static_cast<Eigen::Index>(r));
                   }
                   t.accumulate(table, dt);
                 });
  }

  Var vstack(Var a, Var b) {
    const Mat& av = val(a);
    const Mat& bv = val(b);
    assert(av.cols() == bv.cols());
    Mat out(av.rows() + bv.rows(), av.cols());
    out.topRows(av.rows()) = av;
    out.bottomRows(bv.rows()) = bv;
    return unary_or_binary(std::move(out), a, b, [a, b](Tape& t, const Mat& g) {
      const Eigen::Index ar = t.val(a).rows();
      t.accumulate(a, g.topRows(ar));
      t.accumulate(b, g.bottomRows(g.rows() - ar));
    });
  }

  Var hstack(const std::vector<Var>& xs) {
    assert(!xs.empty());
    Eigen::Index cols = 0;
    const Eigen::Index rows = val(xs[0]).rows();
    for (const Var x : xs) cols += val(x).cols();
    Mat out(rows, cols);
    Eigen::Index at = 0;
    for (const Var x : xs) {
      out.middleCols(at, val(x).cols()) = val(x);
      at += val(x).cols();
    }
    bool needs = false;
    for (const Var x : xs) needs = needs || needs_grad(x);
    if (!grad_on_ || !needs) return {push(std::move(out), false, nullptr)};
    return {push(std::move(out), true, [xs](Tape& t, const Mat& g) {
      Eigen::Index at = 0;
      for (const Var x : xs) {
        const Eigen::Index c = t.val(x).cols();
        t.accumulate(x, g.middleCols(at, c));
        at += c;
      }
    })};
  }

  Var rows(Var a, int start, int n) {
    Mat out = val(a).middleRows(start, n);
    return unary(std::move(out), a, [a, start, n](Tape& t, const Mat& g) {
      Mat da = Mat::Zero(t.val(a).rows(), t.val(a).cols());
      da.middleRows(start, n) = g;
      t.accumulate(a, da);
    });
  }

  Var cols(Var a, int start, int n) {
    Mat out = val(a).middleCols(start, n);
    return unary(std::move(out), a, [a, start, n](Tape& t, const Mat& g) {
      Mat da = Mat::Zero(t.val(a).rows(), t.val(a).cols());
      da.middleCols(start, n) = g;
      t.accumulate(a, da);
    });
  }

  // -- losses ----------------------------------------------------------------

  /// -(1/n) sum_i log(probs[i, ids[i]]) over positions whose id != ignore_id.
  /// Probabilities are clamped at 1e-12 before the log; a clamp is reported
  /// on stderr since it means the model assigned zero mass to a gold token.
  Var neg_mean_log_pick(Var probs, std::vector<int> ids, int ignore_id = -1) {
    const Mat& pv = val(probs);
    assert(static_cast<Eigen::Index>(ids.size()) == pv.rows());
    long kept = 0;
    double total = 0.0;
    for (std::size_t r = 0; r < ids.size(); ++r) {
      if (ids[r] == ignore_id) continue;
      if (ids[r] < 0 || ids[r] >= pv.cols()) {
        throw std::out_of_range("neg_mean_log_pick: id out of range");
      }
      double p = pv(static_cast<Eigen::Index>(r), ids[r]);
      if (p < 1e-12) {
        std::cerr << "[topicsum] warning: clamped zero probability at gold id "
                  << ids[r] << "\n";
        p = 1e-12;
      }
      total -= std::log(p);
      ++kept;
    }
    Mat out(1, 1);
    out(0, 0) = kept == 0 ? 0.0 : total / static_cast<double>(kept);
    if (kept == 0) return {push(std::move(out), false, nullptr)};
    return unary(std::move(out), probs,
                 [probs, ids = std::move(ids), ignore_id, kept](Tape& t,
                                                                const Mat& g) {
                   const Mat& pv = t.val(probs);
                   Mat dp = Mat::Zero(pv.rows(), pv.cols());
                   const double scale = g(0, 0) / static_cast<double>(kept);
                   for (std::size_t r = 0; r < ids.size(); ++r) {
                     if (ids[r] == ignore_id) continue;
                     const double p =
                         std::max(pv(static_cast<Eigen::Index>(r), ids[r]), 1e-12);
                     dp(static_cast<Eigen::Index>(r), ids[r]) -= scale / p;
                   }
                   t.accumulate(probs, dp);
                 });
  }

  // -- backward --------------------------------------------------------------

  void backward(Var scalar) {
    if (!grad_on_) {
      throw std::logic_error("backward() on a gradient-disabled tape");
    }
    Node& top = nodes_.at(scalar.i);
    if (top.value.rows() != 1 || top.value.cols() != 1) {
      throw std::invalid_argument("backward() target must be 1x1");
    }
    top.grad = Mat::Ones(1, 1);
    for (int i = scalar.i; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.backward || n.grad.size() == 0) continue;
      n.backward(*this, n.grad);
    }
  }

private:
  struct Node {
    Mat value;
    Mat grad;  // empty until touched
    bool needs_grad = false;
    std::function<void(Tape&, const Mat&)> backward;
  };

  std::vector<Node> nodes_;
  bool grad_on_;

  int next_index() const { return static_cast<int>(nodes_.size()); }

  bool needs_grad(Var x) const { return nodes_.at(x.i).needs_grad; }

  int push(Mat v, bool needs, std::function<void(Tape&, const Mat&)> back) {
    Node n;
    n.value = std::move(v);
    n.needs_grad = needs;
    n.backward = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  void accumulate(Var x, const Mat& g) {
    Node& n = nodes_.at(x.i);
    if (!n.needs_grad) return;
    if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    n.grad += g;
  }

  template <class F>
  Var unary(Mat out, Var a, F back) {
    if (!grad_on_ || !needs_grad(a)) return {push(std::move(out), false, nullptr)};
    return {push(std::move(out), true, std::move(back))};
  }

  template <class F>
  Var unary_or_binary(Mat out, Var a, Var b, F back) {
    if (!grad_on_ || (!needs_grad(a) && !needs_grad(b))) {
      return {push(std::move(out), false, nullptr)};
    }
    return {push(std::move(out), true, std::move(back))};
  }

  template <class F>
  Var unary_or_ternary(Mat out, Var a, Var b, Var c, F back) {
    if (!grad_on_ || (!needs_grad(a) && !needs_grad(b) && !needs_grad(c))) {
      return {push(std::move(out), false, nullptr)};
    }
    return {push(std::move(out), true, std::move(back))};
  }
};

}  // namespace topicsum::ad

#endif  // TOPICSUM_AUTODIFF_HPP
