#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "autohr/errors.hpp"
#include "autohr/layers.hpp"
#include "autohr/tdc.hpp"

namespace autohr {

// Candidate operation space. Order is part of the contract: none first, then
// identity, then convolutions from spatially-flat to temporally-flat to full,
// then the two temporal-difference variants. Ties in derivation resolve to the
// lowest index.
enum class OpKind { none, skip, conv, tdc };

struct OpSpec {
  const char* name;
  OpKind kind;
  std::array<int, 3> kernel;  // (kt, kh, kw), conv kinds only
  double theta;               // tdc kinds only
};

inline constexpr int kNumOps = 9;
inline constexpr int kNumEdges = 6;
inline constexpr int kNumIntermediate = 3;

inline const std::array<OpSpec, kNumOps>& op_space() {
  static const std::array<OpSpec, kNumOps> ops = {{
      {"none", OpKind::none, {0, 0, 0}, 0.0},
      {"skip_connect", OpKind::skip, {0, 0, 0}, 0.0},
      {"conv_1x3x3", OpKind::conv, {1, 3, 3}, 0.0},
      {"conv_1x5x5", OpKind::conv, {1, 5, 5}, 0.0},
      {"conv_3x1x1", OpKind::conv, {3, 1, 1}, 0.0},
      {"conv_5x1x1", OpKind::conv, {5, 1, 1}, 0.0},
      {"conv_3x3x3", OpKind::conv, {3, 3, 3}, 0.0},
      {"tdc_3x3x3_0.2", OpKind::tdc, {3, 3, 3}, 0.2},
      {"tdc_3x3x3_1.0", OpKind::tdc, {3, 3, 3}, 1.0},
  }};
  return ops;
}

inline int op_index(const std::string& name) {
  const auto& ops = op_space();
  for (int i = 0; i < kNumOps; ++i) {
    if (name == ops[size_t(i)].name) return i;
  }
  throw ConfigError("unknown operation '" + name + "'");
}

// Cell DAG: node 0 is the input, nodes 1..3 are intermediate, the output
// concatenates nodes 1..3. Edge order groups by target node.
inline const std::array<std::pair<int, int>, kNumEdges>& cell_edges() {
  static const std::array<std::pair<int, int>, kNumEdges> e = {
      {{0, 1}, {0, 2}, {1, 2}, {0, 3}, {1, 3}, {2, 3}}};
  return e;
}

// Incoming edge ids for intermediate node j (1-based).
inline std::vector<int> edges_into(int node) {
  switch (node) {
    case 1: return {0};
    case 2: return {1, 2};
    case 3: return {3, 4, 5};
    default: throw ValueError("edges_into: node must be 1..3");
  }
}

inline void softmax(const double* logits, int n, double* out) {
  double mx = logits[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
  double z = 0.0;
  for (int i = 0; i < n; ++i) {
    out[i] = std::exp(logits[i] - mx);
    z += out[i];
  }
  for (int i = 0; i < n; ++i) out[i] /= z;
}

// d(loss)/d(logit_j) given eta = softmax(logits) and g_i = d(loss)/d(weight_i):
// eta_j * (g_j - sum_i eta_i g_i). Accumulates into galpha.
inline void softmax_backward(const double* eta, const double* g, int n, double* galpha) {
  double dot = 0.0;
  for (int i = 0; i < n; ++i) dot += eta[i] * g[i];
  for (int i = 0; i < n; ++i) galpha[i] += eta[i] * (g[i] - dot);
}

// Relaxation parameters. alpha holds one row of kNumOps logits per edge per
// set; a set is one cell architecture (1 set when shared across blocks, 4
// when each block searches its own). beta holds per-edge logits for the
// optional edge normalization.
struct ArchParams {
  int num_sets = 1;
  bool edge_norm = false;
  std::vector<double> alpha, galpha;
  std::vector<double> beta, gbeta;

  ArchParams() : ArchParams(1, false) {}
  ArchParams(int sets, bool use_edge_norm) : num_sets(sets), edge_norm(use_edge_norm) {
    if (sets < 1) throw ValueError("ArchParams: need at least one set");
    alpha.assign(size_t(sets) * kNumEdges * kNumOps, 0.0);
    galpha.assign(alpha.size(), 0.0);
    beta.assign(size_t(sets) * kNumEdges, 0.0);
    gbeta.assign(beta.size(), 0.0);
  }

  double* alpha_edge(int set, int edge) {
    return alpha.data() + (size_t(set) * kNumEdges + edge) * kNumOps;
  }
  const double* alpha_edge(int set, int edge) const {
    return alpha.data() + (size_t(set) * kNumEdges + edge) * kNumOps;
  }
  double* galpha_edge(int set, int edge) {
    return galpha.data() + (size_t(set) * kNumEdges + edge) * kNumOps;
  }

  void zero_grad() {
    std::fill(galpha.begin(), galpha.end(), 0.0);
    std::fill(gbeta.begin(), gbeta.end(), 0.0);
  }

  void check_finite() const {
    for (double v : alpha) {
      if (!std::isfinite(v)) throw ValueError("ArchParams: non-finite alpha");
    }
    for (double v : beta) {
      if (!std::isfinite(v)) throw ValueError("ArchParams: non-finite beta");
    }
  }

  // Mean softmax entropy over all edges and sets; ln(9) when uniform.
  double mean_edge_entropy() const {
    double acc = 0.0;
    for (int s = 0; s < num_sets; ++s) {
      for (int e = 0; e < kNumEdges; ++e) {
        double eta[kNumOps];
        softmax(alpha_edge(s, e), kNumOps, eta);
        double h = 0.0;
        for (int o = 0; o < kNumOps; ++o) {
          if (eta[o] > 0.0) h -= eta[o] * std::log(eta[o]);
        }
        acc += h;
      }
    }
    return acc / (double(num_sets) * kNumEdges);
  }
};

// Named view of a parameter (or buffer, when grad is null) array.
struct ParamView {
  std::string name;
  double* value = nullptr;
  double* grad = nullptr;
  size_t count = 0;
};

// One candidate operation instance: none, identity, or a convolution kind
// followed by batchnorm and relu. Caches its output for the relaxation
// gradient.
class CandidateOp {
 public:
  CandidateOp(int op, int channels, Rng& rng) : op_(op) {
    const OpSpec& spec = op_space()[size_t(op_)];
    switch (spec.kind) {
      case OpKind::none:
      case OpKind::skip:
        break;
      case OpKind::conv: {
        const std::array<int, 3> pad = {(spec.kernel[0] - 1) / 2, (spec.kernel[1] - 1) / 2,
                                        (spec.kernel[2] - 1) / 2};
        conv_ = Conv3d(channels, channels, spec.kernel, {1, 1, 1}, pad, false, rng);
        bn_ = BatchNorm3d(channels);
        break;
      }
      case OpKind::tdc:
        tdc_ = TdcConv3d(channels, channels, spec.theta, rng);
        bn_ = BatchNorm3d(channels);
        break;
    }
  }

  const OpSpec& spec() const { return op_space()[size_t(op_)]; }
  int op() const { return op_; }

  const Tensor& forward(const Tensor& x, bool train) {
    switch (spec().kind) {
      case OpKind::none:
        out_ = Tensor::zeros_like(x);
        break;
      case OpKind::skip:
        out_ = x;
        break;
      case OpKind::conv:
        out_ = relu_.forward(bn_.forward(conv_.forward(x), train));
        break;
      case OpKind::tdc:
        out_ = relu_.forward(bn_.forward(tdc_.forward(x), train));
        break;
    }
    return out_;
  }

  Tensor backward(const Tensor& gy) {
    switch (spec().kind) {
      case OpKind::none:
        return Tensor::zeros_like(gy);
      case OpKind::skip:
        return gy;
      case OpKind::conv:
        return conv_.backward(bn_.backward(relu_.backward(gy)));
      case OpKind::tdc:
        return tdc_.backward(bn_.backward(relu_.backward(gy)));
    }
    throw ValueError("unreachable");
  }

  const Tensor& out() const { return out_; }

  void collect_params(const std::string& prefix, std::vector<ParamView>* out) {
    const std::string base = prefix + "." + spec().name;
    switch (spec().kind) {
      case OpKind::none:
      case OpKind::skip:
        return;
      case OpKind::conv:
        out->push_back({base + ".conv.w", conv_.w.data(), conv_.gw.data(), conv_.w.size()});
        break;
      case OpKind::tdc:
        out->push_back({base + ".tdc.w", tdc_.w.data(), tdc_.gw.data(), tdc_.w.size()});
        break;
    }
    out->push_back({base + ".bn.gamma", bn_.gamma.data(), bn_.ggamma.data(), bn_.gamma.size()});
    out->push_back({base + ".bn.beta", bn_.beta.data(), bn_.gbeta.data(), bn_.beta.size()});
  }

  void collect_buffers(const std::string& prefix, std::vector<ParamView>* out) {
    if (spec().kind == OpKind::conv || spec().kind == OpKind::tdc) {
      const std::string base = prefix + "." + spec().name;
      out->push_back({base + ".bn.run_mean", bn_.run_mean.data(), nullptr, bn_.run_mean.size()});
      out->push_back({base + ".bn.run_var", bn_.run_var.data(), nullptr, bn_.run_var.size()});
    }
  }

  void release_state() {
    out_ = Tensor();
    conv_.release_state();
    tdc_.release_state();
    bn_.release_state();
    relu_.release_state();
  }

 private:
  int op_;
  Conv3d conv_;
  TdcConv3d tdc_;
  BatchNorm3d bn_;
  ReLU relu_;
  Tensor out_;
};

// All nine candidates on one edge, blended by softmax weights. With a partial
// channel ratio below one, only the leading slice of channels runs through
// the candidates; the rest passes through untouched. The output is cyclically
// shifted so bypass channels come first, which hands a fresh slice to the
// next cell. Ratio 1 reduces exactly to the plain relaxation.
class MixedEdge {
 public:
  MixedEdge(int channels, double pc_ratio, Rng& rng) : channels_(channels) {
    if (!(pc_ratio > 0.0 && pc_ratio <= 1.0)) {
      throw ValueError("MixedEdge: partial channel ratio must be in (0, 1]");
    }
    proc_ = std::max(1, int(std::lround(pc_ratio * channels)));
    for (int o = 0; o < kNumOps; ++o) ops_.emplace_back(o, proc_, rng);
  }

  Tensor forward(const Tensor& x, const double* eta, bool train) {
    if (x.dim(1) != channels_) throw ShapeError("MixedEdge: channel mismatch");
    const Tensor* xa = &x;
    Tensor xa_store;
    if (proc_ < channels_) {
      xa_store = slice_channels(x, 0, proc_);
      xa = &xa_store;
    }
    Tensor mixed;
    bool first = true;
    for (int o = 0; o < kNumOps; ++o) {
      if (ops_[size_t(o)].spec().kind == OpKind::none) continue;
      const Tensor& yo = ops_[size_t(o)].forward(*xa, train);
      if (first) {
        mixed = Tensor::zeros_like(yo);
        first = false;
      }
      mixed.add_scaled(yo, eta[o]);
    }
    if (proc_ == channels_) return mixed;
    // shift: bypass channels first, processed slice last
    Tensor out = Tensor::zeros_like(x);
    copy_into_channels(slice_channels(x, proc_, channels_), 0, &out);
    copy_into_channels(mixed, channels_ - proc_, &out);
    return out;
  }

  // Returns the input gradient and writes the per-candidate inner products
  // <gy, op_out> into g_op (the relaxation gradient before the softmax chain).
  Tensor backward(const Tensor& gy, const double* eta, double* g_op) {
    const Tensor* ga = &gy;
    Tensor ga_store;
    if (proc_ < channels_) {
      ga_store = slice_channels(gy, channels_ - proc_, channels_);
      ga = &ga_store;
    }
    Tensor gxa;
    bool first = true;
    for (int o = 0; o < kNumOps; ++o) {
      CandidateOp& op = ops_[size_t(o)];
      if (op.spec().kind == OpKind::none) {
        g_op[o] = 0.0;
        continue;
      }
      g_op[o] = ga->dot(op.out());
      Tensor gyo = Tensor::zeros_like(*ga);
      gyo.add_scaled(*ga, eta[o]);
      Tensor gi = op.backward(gyo);
      if (first) {
        gxa = std::move(gi);
        first = false;
      } else {
        gxa.add_scaled(gi, 1.0);
      }
    }
    if (proc_ == channels_) return gxa;
    // undo the shift: leading gy rows belong to bypassed input channels
    Tensor gx = Tensor::zeros_like(gy);
    copy_into_channels(slice_channels(gy, 0, channels_ - proc_), proc_, &gx);
    add_into_channels(gxa, 0, &gx);
    return gx;
  }

  int processed_channels() const { return proc_; }

  void collect_params(const std::string& prefix, std::vector<ParamView>* out) {
    for (auto& op : ops_) op.collect_params(prefix, out);
  }
  void collect_buffers(const std::string& prefix, std::vector<ParamView>* out) {
    for (auto& op : ops_) op.collect_buffers(prefix, out);
  }
  void release_state() {
    for (auto& op : ops_) op.release_state();
  }

  static Tensor slice_channels(const Tensor& x, int c0, int c1) {
    Tensor y(x.dim(0), c1 - c0, x.dim(2), x.dim(3), x.dim(4));
    const size_t plane = size_t(x.dim(2)) * x.dim(3) * x.dim(4);
    for (int b = 0; b < x.dim(0); ++b)
      for (int c = c0; c < c1; ++c) {
        const double* src = x.data() + (size_t(b) * x.dim(1) + c) * plane;
        double* dst = y.data() + (size_t(b) * (c1 - c0) + (c - c0)) * plane;
        std::copy(src, src + plane, dst);
      }
    return y;
  }

  static void copy_into_channels(const Tensor& src, int c0, Tensor* dst) {
    const size_t plane = size_t(dst->dim(2)) * dst->dim(3) * dst->dim(4);
    for (int b = 0; b < dst->dim(0); ++b)
      for (int c = 0; c < src.dim(1); ++c) {
        const double* s = src.data() + (size_t(b) * src.dim(1) + c) * plane;
        double* d = dst->data() + (size_t(b) * dst->dim(1) + c0 + c) * plane;
        std::copy(s, s + plane, d);
      }
  }

  static void add_into_channels(const Tensor& src, int c0, Tensor* dst) {
    const size_t plane = size_t(dst->dim(2)) * dst->dim(3) * dst->dim(4);
    for (int b = 0; b < dst->dim(0); ++b)
      for (int c = 0; c < src.dim(1); ++c) {
        const double* s = src.data() + (size_t(b) * src.dim(1) + c) * plane;
        double* d = dst->data() + (size_t(b) * dst->dim(1) + c0 + c) * plane;
        for (size_t i = 0; i < plane; ++i) d[i] += s[i];
      }
  }

 private:
  int channels_;
  int proc_;
  std::vector<CandidateOp> ops_;
};

// Relaxed cell: x_j = sum_{i<j} mix(x_i; softmax(alpha_{i,j})), output is the
// channel concatenation of the three intermediate nodes.
class Cell {
 public:
  Cell(int channels, double pc_ratio, Rng& rng) : channels_(channels) {
    for (int e = 0; e < kNumEdges; ++e) edges_.emplace_back(channels, pc_ratio, rng);
  }

  Tensor forward(const Tensor& x, const ArchParams& arch, int set, bool train) {
    arch.check_finite();
    nodes_[0] = x;
    for (int j = 1; j <= kNumIntermediate; ++j) {
      const auto incoming = edges_into(j);
      // edge-normalization coefficients over this node's incoming edges
      std::vector<double> bw(incoming.size(), 1.0);
      if (arch.edge_norm) {
        std::vector<double> logits;
        for (int e : incoming) {
          logits.push_back(arch.beta[size_t(set) * kNumEdges + size_t(e)]);
        }
        bw.resize(incoming.size());
        softmax(logits.data(), int(logits.size()), bw.data());
      }
      Tensor acc;
      for (size_t idx = 0; idx < incoming.size(); ++idx) {
        const int e = incoming[idx];
        const int src = cell_edges()[size_t(e)].first;
        softmax(arch.alpha_edge(set, e), kNumOps, eta_[size_t(e)].data());
        edge_out_[size_t(e)] = edges_[size_t(e)].forward(nodes_[size_t(src)],
                                                         eta_[size_t(e)].data(), train);
        beta_w_[size_t(e)] = bw[idx];
        if (idx == 0) {
          acc = Tensor::zeros_like(edge_out_[size_t(e)]);
        }
        acc.add_scaled(edge_out_[size_t(e)], bw[idx]);
      }
      nodes_[size_t(j)] = std::move(acc);
    }
    return concat_nodes();
  }

  // Accumulates alpha (and beta) gradients into arch; returns d(loss)/d(input).
  Tensor backward(const Tensor& gy, ArchParams& arch, int set) {
    std::array<Tensor, 4> node_grad;
    split_output_grad(gy, &node_grad);
    node_grad[0] = Tensor::zeros_like(nodes_[0]);
    for (int j = kNumIntermediate; j >= 1; --j) {
      const auto incoming = edges_into(j);
      // beta chain first: inner products against each edge output
      if (arch.edge_norm) {
        std::vector<double> g_edge(incoming.size(), 0.0);
        std::vector<double> bw(incoming.size(), 0.0);
        for (size_t idx = 0; idx < incoming.size(); ++idx) {
          const int e = incoming[idx];
          g_edge[idx] = node_grad[size_t(j)].dot(edge_out_[size_t(e)]);
          bw[idx] = beta_w_[size_t(e)];
        }
        std::vector<double> gb(incoming.size(), 0.0);
        softmax_backward(bw.data(), g_edge.data(), int(incoming.size()), gb.data());
        for (size_t idx = 0; idx < incoming.size(); ++idx) {
          arch.gbeta[size_t(set) * kNumEdges + size_t(incoming[idx])] += gb[idx];
        }
      }
      for (int e : incoming) {
        const int src = cell_edges()[size_t(e)].first;
        Tensor g_out = Tensor::zeros_like(node_grad[size_t(j)]);
        g_out.add_scaled(node_grad[size_t(j)], beta_w_[size_t(e)]);
        std::array<double, kNumOps> g_op{};
        Tensor gx = edges_[size_t(e)].backward(g_out, eta_[size_t(e)].data(), g_op.data());
        softmax_backward(eta_[size_t(e)].data(), g_op.data(), kNumOps,
                         arch.galpha_edge(set, e));
        node_grad[size_t(src)].add_scaled(gx, 1.0);
      }
    }
    return node_grad[0];
  }

  int out_channels() const { return channels_ * kNumIntermediate; }

  void collect_params(const std::string& prefix, std::vector<ParamView>* out) {
    for (int e = 0; e < kNumEdges; ++e) {
      edges_[size_t(e)].collect_params(prefix + ".edge" + std::to_string(e), out);
    }
  }
  void collect_buffers(const std::string& prefix, std::vector<ParamView>* out) {
    for (int e = 0; e < kNumEdges; ++e) {
      edges_[size_t(e)].collect_buffers(prefix + ".edge" + std::to_string(e), out);
    }
  }
  void release_state() {
    for (auto& e : edges_) e.release_state();
    for (auto& n : nodes_) n = Tensor();
    for (auto& t : edge_out_) t = Tensor();
  }

 private:
  Tensor concat_nodes() {
    const Tensor& n1 = nodes_[1];
    Tensor out(n1.dim(0), channels_ * kNumIntermediate, n1.dim(2), n1.dim(3), n1.dim(4));
    for (int j = 1; j <= kNumIntermediate; ++j) {
      MixedEdge::copy_into_channels(nodes_[size_t(j)], (j - 1) * channels_, &out);
    }
    return out;
  }

  void split_output_grad(const Tensor& gy, std::array<Tensor, 4>* node_grad) {
    if (gy.dim(1) != channels_ * kNumIntermediate) {
      throw ShapeError("cell backward: expected " + std::to_string(channels_ * 3) +
                       " channels, got " + std::to_string(gy.dim(1)));
    }
    for (int j = 1; j <= kNumIntermediate; ++j) {
      (*node_grad)[size_t(j)] =
          MixedEdge::slice_channels(gy, (j - 1) * channels_, j * channels_);
    }
  }

  int channels_;
  std::vector<MixedEdge> edges_;
  std::array<Tensor, 4> nodes_;
  std::array<std::array<double, kNumOps>, kNumEdges> eta_{};
  std::array<Tensor, kNumEdges> edge_out_;
  std::array<double, kNumEdges> beta_w_{1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
};

// A derived (discrete) cell: the retained edges with one named operation each.
struct GenotypeEdge {
  int node = 0;  // target, 1..3
  int src = 0;   // source, 0..node-1
  int op = 0;    // index into op_space(), never none
};

struct DiscreteCell {
  std::vector<GenotypeEdge> edges;  // sorted by (node, src)
};

// Node 1 keeps its single edge; nodes 2 and 3 keep exactly two incoming edges
// with distinct, strictly earlier sources; `none` never appears.
inline void validate_discrete(const DiscreteCell& cell) {
  std::array<std::vector<int>, 4> srcs;
  for (const auto& e : cell.edges) {
    if (e.node < 1 || e.node > 3) throw ValueError("genotype: node out of range");
    if (e.src < 0 || e.src >= e.node) {
      throw ValueError("genotype: edge source must precede its node");
    }
    if (e.op <= 0 || e.op >= kNumOps) {
      throw ValueError("genotype: operation index invalid or none");
    }
    srcs[size_t(e.node)].push_back(e.src);
  }
  if (srcs[1].size() != 1) throw ValueError("genotype: node 1 must have exactly 1 edge");
  for (int j = 2; j <= 3; ++j) {
    if (srcs[size_t(j)].size() != 2) {
      throw ValueError("genotype: node " + std::to_string(j) + " must have exactly 2 edges");
    }
    if (srcs[size_t(j)][0] == srcs[size_t(j)][1]) {
      throw ValueError("genotype: duplicate source on node " + std::to_string(j));
    }
  }
}

// Per edge: strongest non-none operation by softmax weight (ties to the lower
// op index). Node 3 keeps the two incoming edges with the largest such weight
// (ties to the lower source). Nodes 1 and 2 keep everything they have.
inline DiscreteCell derive_cell(const ArchParams& arch, int set) {
  if (set < 0 || set >= arch.num_sets) throw ValueError("derive: set out of range");
  arch.check_finite();
  std::array<int, kNumEdges> best_op{};
  std::array<double, kNumEdges> strength{};
  for (int e = 0; e < kNumEdges; ++e) {
    double eta[kNumOps];
    softmax(arch.alpha_edge(set, e), kNumOps, eta);
    int arg = 1;
    for (int o = 2; o < kNumOps; ++o) {
      if (eta[o] > eta[arg]) arg = o;
    }
    best_op[size_t(e)] = arg;
    strength[size_t(e)] = eta[arg];
  }
  DiscreteCell cell;
  for (int j = 1; j <= kNumIntermediate; ++j) {
    auto incoming = edges_into(j);
    if (int(incoming.size()) > 2) {
      // stable sort by descending strength; equal strengths keep source order
      std::stable_sort(incoming.begin(), incoming.end(), [&](int a, int b) {
        return strength[size_t(a)] > strength[size_t(b)];
      });
      incoming.resize(2);
      std::sort(incoming.begin(), incoming.end());
    }
    for (int e : incoming) {
      cell.edges.push_back({j, cell_edges()[size_t(e)].first, best_op[size_t(e)]});
    }
  }
  validate_discrete(cell);
  return cell;
}

// One cell per set: a single shared cell, or one per block in varied mode.
inline std::vector<DiscreteCell> derive_architecture(const ArchParams& arch) {
  std::vector<DiscreteCell> cells;
  for (int s = 0; s < arch.num_sets; ++s) cells.push_back(derive_cell(arch, s));
  return cells;
}

// Text genotype: one line per retained edge, "node <j> <- <op>(node <i>)".
// Multi-cell genotypes separate sections with "cell <b>" headers.
inline std::string genotype_to_text(const std::vector<DiscreteCell>& cells) {
  if (cells.empty()) throw ValueError("genotype_to_text: no cells");
  std::ostringstream out;
  for (size_t s = 0; s < cells.size(); ++s) {
    validate_discrete(cells[s]);
    if (cells.size() > 1) out << "cell " << s << "\n";
    for (const auto& e : cells[s].edges) {
      out << "node " << e.node << " <- " << op_space()[size_t(e.op)].name << "(node " << e.src
          << ")\n";
    }
  }
  return out.str();
}

inline std::vector<DiscreteCell> genotype_from_text(const std::string& text) {
  std::vector<DiscreteCell> cells;
  DiscreteCell current;
  bool have_current = false;
  std::istringstream in(text);
  std::string line;
  auto flush = [&]() {
    if (have_current) {
      validate_discrete(current);
      cells.push_back(current);
      current = DiscreteCell{};
      have_current = false;
    }
  };
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (line.rfind("cell ", 0) == 0) {
      flush();
      continue;
    }
    int node = 0, src = 0;
    char opname[128] = {0};
    if (std::sscanf(line.c_str(), "node %d <- %127[^(](node %d)", &node, opname, &src) != 3) {
      throw ConfigError("genotype: cannot parse line '" + line + "'");
    }
    current.edges.push_back({node, src, op_index(opname)});
    have_current = true;
  }
  flush();
  if (cells.empty()) throw ConfigError("genotype: no edges found");
  return cells;
}

// Shipped preset: temporal convolutions feed the first two nodes, a spatial
// convolution and a temporal-difference edge cover the rest.
inline std::string preset_genotype(const std::string& name) {
  if (name == "autohr_v1") {
    return "node 1 <- conv_3x1x1(node 0)\n"
           "node 2 <- conv_5x1x1(node 0)\n"
           "node 2 <- tdc_3x3x3_0.2(node 1)\n"
           "node 3 <- conv_1x5x5(node 0)\n"
           "node 3 <- skip_connect(node 2)\n";
  }
  throw ConfigError("unknown genotype preset '" + name + "'");
}

// Runtime module for a derived cell.
class DiscreteCellModule {
 public:
  DiscreteCellModule(const DiscreteCell& geno, int channels, Rng& rng)
      : geno_(geno), channels_(channels) {
    validate_discrete(geno_);
    for (const auto& e : geno_.edges) ops_.emplace_back(e.op, channels, rng);
  }

  Tensor forward(const Tensor& x, bool train) {
    nodes_[0] = x;
    for (int j = 1; j <= kNumIntermediate; ++j) {
      Tensor acc;
      bool first = true;
      for (size_t k = 0; k < geno_.edges.size(); ++k) {
        if (geno_.edges[k].node != j) continue;
        const Tensor& y = ops_[k].forward(nodes_[size_t(geno_.edges[k].src)], train);
        if (first) {
          acc = Tensor::zeros_like(y);
          first = false;
        }
        acc.add_scaled(y, 1.0);
      }
      nodes_[size_t(j)] = std::move(acc);
    }
    Tensor out(x.dim(0), channels_ * kNumIntermediate, x.dim(2), x.dim(3), x.dim(4));
    for (int j = 1; j <= kNumIntermediate; ++j) {
      MixedEdge::copy_into_channels(nodes_[size_t(j)], (j - 1) * channels_, &out);
    }
    return out;
  }

  Tensor backward(const Tensor& gy) {
    std::array<Tensor, 4> node_grad;
    for (int j = 1; j <= kNumIntermediate; ++j) {
      node_grad[size_t(j)] = MixedEdge::slice_channels(gy, (j - 1) * channels_, j * channels_);
    }
    node_grad[0] = Tensor::zeros_like(nodes_[0]);
    for (int j = kNumIntermediate; j >= 1; --j) {
      for (size_t k = geno_.edges.size(); k-- > 0;) {
        if (geno_.edges[k].node != j) continue;
        Tensor gx = ops_[k].backward(node_grad[size_t(j)]);
        node_grad[size_t(geno_.edges[k].src)].add_scaled(gx, 1.0);
      }
    }
    return node_grad[0];
  }

  const DiscreteCell& genotype() const { return geno_; }
  int out_channels() const { return channels_ * kNumIntermediate; }

  void collect_params(const std::string& prefix, std::vector<ParamView>* out) {
    for (size_t k = 0; k < ops_.size(); ++k) {
      ops_[k].collect_params(prefix + ".edge" + std::to_string(k), out);
    }
  }
  void collect_buffers(const std::string& prefix, std::vector<ParamView>* out) {
    for (size_t k = 0; k < ops_.size(); ++k) {
      ops_[k].collect_buffers(prefix + ".edge" + std::to_string(k), out);
    }
  }
  void release_state() {
    for (auto& op : ops_) op.release_state();
    for (auto& n : nodes_) n = Tensor();
  }

 private:
  DiscreteCell geno_;
  int channels_;
  std::vector<CandidateOp> ops_;
  std::array<Tensor, 4> nodes_;
};

}  // namespace autohr
