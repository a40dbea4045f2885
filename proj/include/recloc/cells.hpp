// SPDX-License-Identifier: Apache-2.0
//
// Recurrent cells (GRU, LSTM) and the feed-forward stand-in used by the
// no-recurrence baseline. Each cell has a single-step API and a
// whole-sequence forward/backward used by the model. Sequences are stored
// column-wise: X is D x T, outputs are H x T.
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "recloc/errors.hpp"

namespace recloc {

enum class CellType : int { kGru = 0, kLstm = 1, kFc = 2 };

inline const char* cell_type_name(CellType t) {
  switch (t) {
    case CellType::kGru: return "gru";
    case CellType::kLstm: return "lstm";
    case CellType::kFc: return "fc";
  }
  return "?";
}

inline CellType parse_cell_type(const std::string& s) {
  if (s == "gru") return CellType::kGru;
  if (s == "lstm") return CellType::kLstm;
  if (s == "fc") return CellType::kFc;
  throw ConfigError("unknown cell type '" + s + "' (expected gru, lstm or fc)");
}

// Gates per gated cell: GRU {z, r, h}, LSTM {f, i, o, c}.
inline int gate_count(CellType t) {
  switch (t) {
    case CellType::kGru: return 3;
    case CellType::kLstm: return 4;
    case CellType::kFc: return 0;
  }
  return 0;
}

// The FC cell is tanh(W2 tanh(W1 x + b1)) with W1: 3H x D, b1: 3H and
// W2: H x 3H (no output bias), which has exactly 3(HD + HH + H) parameters,
// the same as a GRU cell.
inline Eigen::Index cell_param_count(CellType t, Eigen::Index input_dim, Eigen::Index hidden) {
  if (t == CellType::kFc) {
    return 3 * hidden * input_dim + 3 * hidden + hidden * 3 * hidden;
  }
  return gate_count(t) * (hidden * input_dim + hidden * hidden + hidden);
}

// Weights of one cell. For gated cells w[g], u[g], b[g] are the input,
// recurrent and bias terms of gate g. For the FC cell w = {W1, W2}, b = {b1}
// and u is empty.
template <typename Mat, typename Vec>
struct CellWeights {
  CellType type = CellType::kGru;
  std::vector<Mat> w;
  std::vector<Mat> u;
  std::vector<Vec> b;

  Eigen::Index input_dim() const { return w.front().cols(); }
  Eigen::Index hidden() const { return w.back().rows(); }
};

using CellParams = CellWeights<Eigen::MatrixXd, Eigen::VectorXd>;
using CellView = CellWeights<Eigen::Map<const Eigen::MatrixXd>, Eigen::Map<const Eigen::VectorXd>>;
using CellGradView = CellWeights<Eigen::Map<Eigen::MatrixXd>, Eigen::Map<Eigen::VectorXd>>;

inline CellParams zero_cell(CellType type, Eigen::Index input_dim, Eigen::Index hidden) {
  CellParams p;
  p.type = type;
  if (type == CellType::kFc) {
    p.w = {Eigen::MatrixXd::Zero(3 * hidden, input_dim), Eigen::MatrixXd::Zero(hidden, 3 * hidden)};
    p.b = {Eigen::VectorXd::Zero(3 * hidden)};
    return p;
  }
  for (int g = 0; g < gate_count(type); ++g) {
    p.w.push_back(Eigen::MatrixXd::Zero(hidden, input_dim));
    p.u.push_back(Eigen::MatrixXd::Zero(hidden, hidden));
    p.b.push_back(Eigen::VectorXd::Zero(hidden));
  }
  return p;
}

namespace detail {

inline Eigen::ArrayXd sigmoid(const Eigen::ArrayXd& a) { return 1.0 / (1.0 + (-a).exp()); }

template <typename CW>
void check_cell_shapes(const CW& p, Eigen::Index x_size, Eigen::Index h_size) {
  const auto gates = static_cast<std::size_t>(gate_count(p.type));
  if (p.type == CellType::kFc) {
    if (p.w.size() != 2 || p.b.size() != 1) throw InputError("fc cell expects W1, W2, b1");
  } else if (p.w.size() != gates || p.u.size() != gates || p.b.size() != gates) {
    throw InputError(std::string(cell_type_name(p.type)) + " cell has wrong number of gates");
  }
  if (p.input_dim() != x_size) throw InputError("cell input size mismatch");
  if (h_size >= 0 && p.hidden() != h_size) throw InputError("cell hidden size mismatch");
}

}  // namespace detail

template <typename CW>
Eigen::VectorXd gru_step(const CW& p, const Eigen::VectorXd& x, const Eigen::VectorXd& h_prev) {
  if (p.type != CellType::kGru) throw InputError("gru_step needs a GRU cell");
  detail::check_cell_shapes(p, x.size(), h_prev.size());
  const Eigen::ArrayXd z = detail::sigmoid((p.w[0] * x + p.u[0] * h_prev + p.b[0]).array());
  const Eigen::ArrayXd r = detail::sigmoid((p.w[1] * x + p.u[1] * h_prev + p.b[1]).array());
  const Eigen::VectorXd rh = (r * h_prev.array()).matrix();
  const Eigen::ArrayXd cand = (p.w[2] * x + p.u[2] * rh + p.b[2]).array().tanh();
  return (z * h_prev.array() + (1.0 - z) * cand).matrix();
}

struct LstmState {
  Eigen::VectorXd h;
  Eigen::VectorXd c;
};

template <typename CW>
LstmState lstm_step(const CW& p, const Eigen::VectorXd& x, const Eigen::VectorXd& h_prev,
                    const Eigen::VectorXd& c_prev) {
  if (p.type != CellType::kLstm) throw InputError("lstm_step needs an LSTM cell");
  detail::check_cell_shapes(p, x.size(), h_prev.size());
  if (c_prev.size() != h_prev.size()) throw InputError("lstm_step: cell state size mismatch");
  auto gate = [&](int g) { return (p.w[g] * x + p.u[g] * h_prev + p.b[g]).array().eval(); };
  const Eigen::ArrayXd f = detail::sigmoid(gate(0));
  const Eigen::ArrayXd i = detail::sigmoid(gate(1));
  const Eigen::ArrayXd o = detail::sigmoid(gate(2));
  const Eigen::ArrayXd cand = gate(3).tanh();
  LstmState s;
  s.c = (f * c_prev.array() + i * cand).matrix();
  s.h = (o * s.c.array().tanh()).matrix();
  return s;
}

template <typename CW>
Eigen::VectorXd fc_cell_step(const CW& p, const Eigen::VectorXd& x) {
  if (p.type != CellType::kFc) throw InputError("fc_cell_step needs an FC cell");
  detail::check_cell_shapes(p, x.size(), -1);
  const Eigen::VectorXd a = (p.w[0] * x + p.b[0]).array().tanh().matrix();
  return (p.w[1] * a).array().tanh().matrix();
}

// Activations of one layer over a sequence, kept for the backward pass.
struct LayerCache {
  std::vector<Eigen::MatrixXd> gates;  // per gate, rows x T
  Eigen::MatrixXd cell;                // LSTM memory, H x T
  Eigen::MatrixXd out;                 // H x T
};

// Runs a cell over the columns of X starting from a zero state.
template <typename CW>
void layer_forward(const CW& p, const Eigen::MatrixXd& X, LayerCache& cache) {
  detail::check_cell_shapes(p, X.rows(), -1);
  const Eigen::Index T = X.cols();
  const Eigen::Index H = p.hidden();
  cache.out.resize(H, T);

  if (p.type == CellType::kFc) {
    Eigen::MatrixXd a = p.w[0] * X;
    a.colwise() += p.b[0];
    cache.gates = {a.array().tanh().matrix()};
    cache.out = (p.w[1] * cache.gates[0]).array().tanh().matrix();
    return;
  }

  const int G = gate_count(p.type);
  cache.gates.assign(static_cast<std::size_t>(G), Eigen::MatrixXd(H, T));
  std::vector<Eigen::MatrixXd> pre(static_cast<std::size_t>(G));
  for (int g = 0; g < G; ++g) {
    pre[g] = p.w[g] * X;
    pre[g].colwise() += p.b[g];
  }
  Eigen::VectorXd h = Eigen::VectorXd::Zero(H);

  if (p.type == CellType::kGru) {
    for (Eigen::Index t = 0; t < T; ++t) {
      const Eigen::ArrayXd z = detail::sigmoid((pre[0].col(t) + p.u[0] * h).array());
      const Eigen::ArrayXd r = detail::sigmoid((pre[1].col(t) + p.u[1] * h).array());
      const Eigen::VectorXd rh = (r * h.array()).matrix();
      const Eigen::ArrayXd cand = (pre[2].col(t) + p.u[2] * rh).array().tanh();
      h = (z * h.array() + (1.0 - z) * cand).matrix();
      cache.gates[0].col(t) = z.matrix();
      cache.gates[1].col(t) = r.matrix();
      cache.gates[2].col(t) = cand.matrix();
      cache.out.col(t) = h;
    }
    return;
  }

  cache.cell.resize(H, T);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(H);
  for (Eigen::Index t = 0; t < T; ++t) {
    const Eigen::ArrayXd f = detail::sigmoid((pre[0].col(t) + p.u[0] * h).array());
    const Eigen::ArrayXd i = detail::sigmoid((pre[1].col(t) + p.u[1] * h).array());
    const Eigen::ArrayXd o = detail::sigmoid((pre[2].col(t) + p.u[2] * h).array());
    const Eigen::ArrayXd cand = (pre[3].col(t) + p.u[3] * h).array().tanh();
    c = (f * c.array() + i * cand).matrix();
    h = (o * c.array().tanh()).matrix();
    cache.gates[0].col(t) = f.matrix();
    cache.gates[1].col(t) = i.matrix();
    cache.gates[2].col(t) = o.matrix();
    cache.gates[3].col(t) = cand.matrix();
    cache.cell.col(t) = c;
    cache.out.col(t) = h;
  }
}

// Accumulates parameter gradients into `grad` and writes the input gradient
// to dX. dOut is the loss gradient w.r.t. the layer outputs (H x T). With
// bptt > 0, gradient flow through the recurrent state is cut at every
// t % bptt == 0 (the forward state is still carried across).
template <typename CW, typename GW>
void layer_backward(const CW& p, GW& grad, const Eigen::MatrixXd& X, const LayerCache& cache,
                    const Eigen::MatrixXd& dOut, int bptt, Eigen::MatrixXd& dX) {
  const Eigen::Index T = X.cols();
  const Eigen::Index H = p.hidden();

  if (p.type == CellType::kFc) {
    const Eigen::MatrixXd& a = cache.gates[0];
    const Eigen::MatrixXd dh_pre = (dOut.array() * (1.0 - cache.out.array().square())).matrix();
    grad.w[1].noalias() += dh_pre * a.transpose();
    const Eigen::MatrixXd da_pre =
        ((p.w[1].transpose() * dh_pre).array() * (1.0 - a.array().square())).matrix();
    grad.w[0].noalias() += da_pre * X.transpose();
    grad.b[0] += da_pre.rowwise().sum();
    dX.noalias() = p.w[0].transpose() * da_pre;
    return;
  }

  const int G = gate_count(p.type);
  std::vector<Eigen::MatrixXd> dpre(static_cast<std::size_t>(G), Eigen::MatrixXd::Zero(H, T));
  Eigen::MatrixXd h_prev_all = Eigen::MatrixXd::Zero(H, T);
  if (T > 1) h_prev_all.rightCols(T - 1) = cache.out.leftCols(T - 1);
  Eigen::VectorXd carry_h = Eigen::VectorXd::Zero(H);
  auto cut = [bptt](Eigen::Index t) { return bptt > 0 && t % bptt == 0; };

  if (p.type == CellType::kGru) {
    for (Eigen::Index t = T - 1; t >= 0; --t) {
      const Eigen::ArrayXd dh = (dOut.col(t) + carry_h).array();
      const Eigen::ArrayXd hp = h_prev_all.col(t).array();
      const Eigen::ArrayXd z = cache.gates[0].col(t).array();
      const Eigen::ArrayXd r = cache.gates[1].col(t).array();
      const Eigen::ArrayXd cand = cache.gates[2].col(t).array();

      const Eigen::ArrayXd dz = dh * (hp - cand);
      const Eigen::ArrayXd da_h = dh * (1.0 - z) * (1.0 - cand.square());
      Eigen::ArrayXd dhp = dh * z;
      const Eigen::ArrayXd drh = (p.u[2].transpose() * da_h.matrix()).array();
      dhp += drh * r;
      const Eigen::ArrayXd da_z = dz * z * (1.0 - z);
      const Eigen::ArrayXd da_r = drh * hp * r * (1.0 - r);
      dhp += (p.u[0].transpose() * da_z.matrix()).array() +
             (p.u[1].transpose() * da_r.matrix()).array();

      dpre[0].col(t) = da_z.matrix();
      dpre[1].col(t) = da_r.matrix();
      dpre[2].col(t) = da_h.matrix();
      if (cut(t)) carry_h.setZero(); else carry_h = dhp.matrix();
    }
    const Eigen::MatrixXd rh_all = (cache.gates[1].array() * h_prev_all.array()).matrix();
    for (int g = 0; g < G; ++g) {
      grad.w[g].noalias() += dpre[g] * X.transpose();
      grad.u[g].noalias() += dpre[g] * (g == 2 ? rh_all : h_prev_all).transpose();
      grad.b[g] += dpre[g].rowwise().sum();
    }
  } else {
    Eigen::MatrixXd c_prev_all = Eigen::MatrixXd::Zero(H, T);
    if (T > 1) c_prev_all.rightCols(T - 1) = cache.cell.leftCols(T - 1);
    Eigen::VectorXd carry_c = Eigen::VectorXd::Zero(H);
    for (Eigen::Index t = T - 1; t >= 0; --t) {
      const Eigen::ArrayXd dh = (dOut.col(t) + carry_h).array();
      const Eigen::ArrayXd f = cache.gates[0].col(t).array();
      const Eigen::ArrayXd i = cache.gates[1].col(t).array();
      const Eigen::ArrayXd o = cache.gates[2].col(t).array();
      const Eigen::ArrayXd cand = cache.gates[3].col(t).array();
      const Eigen::ArrayXd tc = cache.cell.col(t).array().tanh();
      const Eigen::ArrayXd cp = c_prev_all.col(t).array();

      const Eigen::ArrayXd dc = dh * o * (1.0 - tc.square()) + carry_c.array();
      dpre[0].col(t) = (dc * cp * f * (1.0 - f)).matrix();
      dpre[1].col(t) = (dc * cand * i * (1.0 - i)).matrix();
      dpre[2].col(t) = (dh * tc * o * (1.0 - o)).matrix();
      dpre[3].col(t) = (dc * i * (1.0 - cand.square())).matrix();
      Eigen::VectorXd dhp = Eigen::VectorXd::Zero(H);
      for (int g = 0; g < G; ++g) dhp.noalias() += p.u[g].transpose() * dpre[g].col(t);

      if (cut(t)) {
        carry_h.setZero();
        carry_c.setZero();
      } else {
        carry_h = dhp;
        carry_c = (dc * f).matrix();
      }
    }
    for (int g = 0; g < G; ++g) {
      grad.w[g].noalias() += dpre[g] * X.transpose();
      grad.u[g].noalias() += dpre[g] * h_prev_all.transpose();
      grad.b[g] += dpre[g].rowwise().sum();
    }
  }

  dX.noalias() = p.w[0].transpose() * dpre[0];
  for (int g = 1; g < G; ++g) dX.noalias() += p.w[g].transpose() * dpre[g];
}

}  // namespace recloc
