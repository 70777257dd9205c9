#pragma once

// A single-direction LSTM layer with explicit forward traces and backprop.
//
//   z_t = W x_t + U h_{t-1} + b            (4h: input, forget, output, candidate)
//   i, f, o = sigmoid(z_i, z_f, z_o)       g = tanh(z_g)
//   c_t = f * c_{t-1} + i * g              h_t = o * tanh(c_t)
//
// h_0 = c_0 = 0.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <vector>

namespace cce {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct LstmParams {
  MatrixXd W;  // 4h x input
  MatrixXd U;  // 4h x h
  MatrixXd b;  // 4h x 1

  Eigen::Index hidden() const { return U.cols(); }
  Eigen::Index input() const { return W.cols(); }

  static LstmParams zeros(Eigen::Index input, Eigen::Index hidden) {
    return {MatrixXd::Zero(4 * hidden, input), MatrixXd::Zero(4 * hidden, hidden), MatrixXd::Zero(4 * hidden, 1)};
  }

  friend bool operator==(const LstmParams& a, const LstmParams& b) {
    return a.W == b.W && a.U == b.U && a.b == b.b;
  }
};

struct LstmStep {
  VectorXd x, h_prev, c_prev;
  VectorXd i, f, o, g;
  VectorXd c, tanh_c, h;
};

using LstmTrace = std::vector<LstmStep>;

namespace detail {
inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }
}  // namespace detail

/// Runs the cell over `inputs` in the given order, recording every step.
template <typename InputRange>
LstmTrace lstm_forward(const LstmParams& p, const InputRange& inputs) {
  const auto h = p.hidden();
  LstmTrace trace;
  trace.reserve(inputs.size());
  VectorXd h_prev = VectorXd::Zero(h);
  VectorXd c_prev = VectorXd::Zero(h);
  for (const auto& x : inputs) {
    LstmStep s;
    s.x = x;
    s.h_prev = h_prev;
    s.c_prev = c_prev;
    VectorXd z = p.W * x + p.U * h_prev + p.b.col(0);
    s.i = z.segment(0, h).unaryExpr(&detail::sigmoid);
    s.f = z.segment(h, h).unaryExpr(&detail::sigmoid);
    s.o = z.segment(2 * h, h).unaryExpr(&detail::sigmoid);
    s.g = z.segment(3 * h, h).array().tanh().matrix();
    s.c = s.f.cwiseProduct(c_prev) + s.i.cwiseProduct(s.g);
    s.tanh_c = s.c.array().tanh().matrix();
    s.h = s.o.cwiseProduct(s.tanh_c);
    h_prev = s.h;
    c_prev = s.c;
    trace.push_back(std::move(s));
  }
  return trace;
}

/// Backprop through time. `d_h[t]` is the loss gradient on the step-t output
/// (entries may be empty vectors, meaning zero). Parameter gradients are added
/// into `grad`; returns the gradient on each step's input.
inline std::vector<VectorXd> lstm_backward(const LstmParams& p, const LstmTrace& trace,
                                           const std::vector<VectorXd>& d_h, LstmParams& grad) {
  const auto h = p.hidden();
  std::vector<VectorXd> d_x(trace.size());
  VectorXd dh_next = VectorXd::Zero(h);
  VectorXd dc_next = VectorXd::Zero(h);
  VectorXd dz(4 * h);
  for (std::size_t k = trace.size(); k-- > 0;) {
    const auto& s = trace[k];
    VectorXd dh = dh_next;
    if (d_h[k].size()) dh += d_h[k];
    const VectorXd d_o = dh.cwiseProduct(s.tanh_c);
    const VectorXd dc =
        dh.cwiseProduct(s.o).cwiseProduct((1.0 - s.tanh_c.array().square()).matrix()) + dc_next;
    const VectorXd d_i = dc.cwiseProduct(s.g);
    const VectorXd d_g = dc.cwiseProduct(s.i);
    const VectorXd d_f = dc.cwiseProduct(s.c_prev);
    dz.segment(0, h) = d_i.array() * s.i.array() * (1.0 - s.i.array());
    dz.segment(h, h) = d_f.array() * s.f.array() * (1.0 - s.f.array());
    dz.segment(2 * h, h) = d_o.array() * s.o.array() * (1.0 - s.o.array());
    dz.segment(3 * h, h) = d_g.array() * (1.0 - s.g.array().square());
    grad.W.noalias() += dz * s.x.transpose();
    grad.U.noalias() += dz * s.h_prev.transpose();
    grad.b.col(0) += dz;
    d_x[k] = p.W.transpose() * dz;
    dh_next = p.U.transpose() * dz;
    dc_next = dc.cwiseProduct(s.f);
  }
  return d_x;
}

}  // namespace cce
