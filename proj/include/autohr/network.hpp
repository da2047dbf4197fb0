#pragma once

#include <algorithm>
#include <array>
#include <string>
#include <vector>

#include "autohr/cell.hpp"
#include "autohr/errors.hpp"
#include "autohr/layers.hpp"

namespace autohr {

// Backbone geometry. Pools with strides (1,2,2), (2,2,2), (2,2,2) follow the
// first three blocks, so a full-size network downsamples time by 4 and space
// by 8; the head upsamples time back so the output signal has one sample per
// input frame. Smaller block counts drop pools from the tail of that list.
struct NetworkConfig {
  int channels = 16;
  int num_blocks = 4;
  int cells_per_block = 2;
  bool shared_arch = true;  // supernet: one architecture set for all blocks
  double pc_ratio = 1.0;    // supernet: partial channel ratio
  bool edge_norm = false;   // supernet: edge normalization

  int num_cells() const { return num_blocks * cells_per_block; }
  int num_pools() const { return std::min(3, num_blocks - 1); }
  int temporal_divisor() const {
    int d = 1;
    for (int p = 0; p < num_pools(); ++p) d *= pool_stride(p)[0];
    return d;
  }
  int spatial_divisor() const {
    int d = 1;
    for (int p = 0; p < num_pools(); ++p) d *= pool_stride(p)[1];
    return d;
  }
  static std::array<int, 3> pool_stride(int p) {
    static const std::array<std::array<int, 3>, 3> s = {{{1, 2, 2}, {2, 2, 2}, {2, 2, 2}}};
    return s[size_t(p)];
  }
  void validate() const {
    if (channels < 1) throw ValueError("network: channels must be positive");
    if (num_blocks < 1 || cells_per_block < 1) {
      throw ValueError("network: need at least one block and one cell per block");
    }
    if (!(pc_ratio > 0.0 && pc_ratio <= 1.0)) {
      throw ValueError("network: pc_ratio must be in (0, 1]");
    }
  }
};

namespace detail {

// Stem, per-cell projections, pools, and the head shared by both network
// variants. The cell loop lives in the variant because the call signatures
// differ.
struct BackboneCore {
  NetworkConfig cfg;
  Conv3d stem;
  std::vector<Conv3d> proj;
  std::vector<MaxPool3d> pools;
  SpatialGlobalAvgPool gap;
  TemporalLinearUpsample up{1};
  Conv3d head;

  void init(const NetworkConfig& c, Rng& rng) {
    c.validate();
    cfg = c;
    stem = Conv3d(3, c.channels, {1, 5, 5}, {1, 1, 1}, {0, 2, 2}, true, rng);
    for (int i = 0; i < c.num_cells(); ++i) {
      proj.emplace_back(3 * c.channels, c.channels, std::array<int, 3>{1, 1, 1},
                        std::array<int, 3>{1, 1, 1}, std::array<int, 3>{0, 0, 0}, true, rng);
    }
    for (int p = 0; p < c.num_pools(); ++p) pools.emplace_back(NetworkConfig::pool_stride(p));
    up = TemporalLinearUpsample(c.temporal_divisor());
    head = Conv3d(c.channels, 1, {1, 1, 1}, {1, 1, 1}, {0, 0, 0}, true, rng);
  }

  void validate_input(const Tensor& x) const {
    if (x.dim(1) != 3) {
      throw ShapeError("network input: expected 3 channels, got " + std::to_string(x.dim(1)));
    }
    const int td = cfg.temporal_divisor(), sd = cfg.spatial_divisor();
    if (x.dim(2) % td != 0) {
      throw ShapeError("network input: frame count " + std::to_string(x.dim(2)) +
                       " not divisible by " + std::to_string(td));
    }
    if (x.dim(3) % sd != 0) {
      throw ShapeError("network input: height " + std::to_string(x.dim(3)) +
                       " not divisible by " + std::to_string(sd));
    }
    if (x.dim(4) % sd != 0) {
      throw ShapeError("network input: width " + std::to_string(x.dim(4)) +
                       " not divisible by " + std::to_string(sd));
    }
  }

  // (n, C, T/td, h, w) -> per-sample signals of length T
  std::vector<std::vector<double>> tail_forward(const Tensor& feats) {
    Tensor y = head.forward(up.forward(gap.forward(feats)));
    std::vector<std::vector<double>> out(size_t(y.dim(0)));
    for (int i = 0; i < y.dim(0); ++i) {
      out[size_t(i)].resize(size_t(y.dim(2)));
      for (int t = 0; t < y.dim(2); ++t) out[size_t(i)][size_t(t)] = y.at(i, 0, t, 0, 0);
    }
    return out;
  }

  Tensor tail_backward(const std::vector<std::vector<double>>& gsig, int t_out) {
    Tensor gy(int(gsig.size()), 1, t_out, 1, 1);
    for (size_t i = 0; i < gsig.size(); ++i) {
      if (int(gsig[i].size()) != t_out) {
        throw ShapeError("signal gradient length mismatch");
      }
      for (int t = 0; t < t_out; ++t) gy.at(int(i), 0, t, 0, 0) = gsig[i][size_t(t)];
    }
    return gap.backward(up.backward(head.backward(gy)));
  }

  void collect_head_stem_params(std::vector<ParamView>* out) {
    out->push_back({"stem.w", stem.w.data(), stem.gw.data(), stem.w.size()});
    out->push_back({"stem.b", stem.b.data(), stem.gb.data(), stem.b.size()});
    out->push_back({"head.w", head.w.data(), head.gw.data(), head.w.size()});
    out->push_back({"head.b", head.b.data(), head.gb.data(), head.b.size()});
  }

  void collect_proj_params(int cell_index, const std::string& prefix,
                           std::vector<ParamView>* out) {
    Conv3d& p = proj[size_t(cell_index)];
    out->push_back({prefix + ".w", p.w.data(), p.gw.data(), p.w.size()});
    out->push_back({prefix + ".b", p.b.data(), p.gb.data(), p.b.size()});
  }

  std::string cell_prefix(int cell_index) const {
    const int b = cell_index / cfg.cells_per_block;
    const int k = cell_index % cfg.cells_per_block;
    return "block" + std::to_string(b) + ".cell" + std::to_string(k);
  }
  std::string proj_prefix(int cell_index) const {
    const int b = cell_index / cfg.cells_per_block;
    const int k = cell_index % cfg.cells_per_block;
    return "block" + std::to_string(b) + ".proj" + std::to_string(k);
  }

  void release_state() {
    stem.release_state();
    for (auto& p : proj) p.release_state();
    for (auto& p : pools) p.release_state();
    head.release_state();
  }
};

}  // namespace detail

// Relaxed search network: every cell is a full mixed-candidate cell. With
// shared_arch one architecture set drives all blocks, otherwise each block
// owns a set.
class Supernet {
 public:
  Supernet(const NetworkConfig& cfg, Rng& rng)
      : arch(cfg.shared_arch ? 1 : cfg.num_blocks, cfg.edge_norm) {
    core_.init(cfg, rng);
    for (int i = 0; i < cfg.num_cells(); ++i) {
      cells_.emplace_back(cfg.channels, cfg.pc_ratio, rng);
    }
  }

  std::vector<std::vector<double>> forward(const Tensor& x, bool train) {
    core_.validate_input(x);
    Tensor h = core_.stem.forward(x);
    int ci = 0, pi = 0;
    for (int b = 0; b < core_.cfg.num_blocks; ++b) {
      for (int k = 0; k < core_.cfg.cells_per_block; ++k, ++ci) {
        Tensor cell_out = cells_[size_t(ci)].forward(h, arch, set_for_block(b), train);
        h = core_.proj[size_t(ci)].forward(cell_out);
      }
      if (pi < core_.cfg.num_pools()) h = core_.pools[size_t(pi++)].forward(h);
    }
    t_in_ = x.dim(2);
    return core_.tail_forward(h);
  }

  // Accumulates gradients into weights and architecture parameters.
  void backward(const std::vector<std::vector<double>>& gsig) {
    Tensor g = core_.tail_backward(gsig, t_in_);
    int ci = core_.cfg.num_cells() - 1;
    int pi = core_.cfg.num_pools() - 1;
    for (int b = core_.cfg.num_blocks - 1; b >= 0; --b) {
      if (b < core_.cfg.num_blocks - 1 && pi >= 0) g = core_.pools[size_t(pi--)].backward(g);
      for (int k = core_.cfg.cells_per_block - 1; k >= 0; --k, --ci) {
        g = core_.proj[size_t(ci)].backward(g);
        g = cells_[size_t(ci)].backward(g, arch, set_for_block(b));
      }
    }
    core_.stem.backward(g);
  }

  int set_for_block(int b) const { return core_.cfg.shared_arch ? 0 : b; }
  const NetworkConfig& config() const { return core_.cfg; }

  void collect_params(std::vector<ParamView>* out) {
    core_.collect_head_stem_params(out);
    for (int i = 0; i < core_.cfg.num_cells(); ++i) {
      cells_[size_t(i)].collect_params(core_.cell_prefix(i), out);
      core_.collect_proj_params(i, core_.proj_prefix(i), out);
    }
  }
  void collect_arch(std::vector<ParamView>* out) {
    out->push_back({"arch.alpha", arch.alpha.data(), arch.galpha.data(), arch.alpha.size()});
    out->push_back({"arch.beta", arch.beta.data(), arch.gbeta.data(), arch.beta.size()});
  }
  void collect_buffers(std::vector<ParamView>* out) {
    for (int i = 0; i < core_.cfg.num_cells(); ++i) {
      cells_[size_t(i)].collect_buffers(core_.cell_prefix(i), out);
    }
  }

  std::vector<DiscreteCell> derive() const { return derive_architecture(arch); }

  void release_state() {
    core_.release_state();
    for (auto& c : cells_) c.release_state();
  }

  ArchParams arch;

 private:
  detail::BackboneCore core_;
  std::vector<Cell> cells_;
  int t_in_ = 0;
};

// Derived network: fixed genotype, one weight set per cell. A one-cell
// genotype is shared by every cell; a per-block genotype needs one cell per
// block.
class Network {
 public:
  Network(const NetworkConfig& cfg, const std::vector<DiscreteCell>& genotype, Rng& rng) {
    core_.init(cfg, rng);
    if (genotype.empty()) throw ValueError("network: empty genotype");
    if (genotype.size() != 1 && int(genotype.size()) != cfg.num_blocks) {
      throw ValueError("network: genotype must have 1 cell or one per block, got " +
                       std::to_string(genotype.size()));
    }
    for (const auto& g : genotype) validate_discrete(g);
    genotype_ = genotype;
    for (int i = 0; i < cfg.num_cells(); ++i) {
      const int b = i / cfg.cells_per_block;
      const DiscreteCell& g = genotype.size() == 1 ? genotype[0] : genotype[size_t(b)];
      cells_.emplace_back(g, cfg.channels, rng);
    }
  }

  std::vector<std::vector<double>> forward(const Tensor& x, bool train) {
    core_.validate_input(x);
    Tensor h = core_.stem.forward(x);
    int ci = 0, pi = 0;
    for (int b = 0; b < core_.cfg.num_blocks; ++b) {
      for (int k = 0; k < core_.cfg.cells_per_block; ++k, ++ci) {
        h = core_.proj[size_t(ci)].forward(cells_[size_t(ci)].forward(h, train));
      }
      if (pi < core_.cfg.num_pools()) h = core_.pools[size_t(pi++)].forward(h);
    }
    t_in_ = x.dim(2);
    return core_.tail_forward(h);
  }

  void backward(const std::vector<std::vector<double>>& gsig) {
    Tensor g = core_.tail_backward(gsig, t_in_);
    int ci = core_.cfg.num_cells() - 1;
    int pi = core_.cfg.num_pools() - 1;
    for (int b = core_.cfg.num_blocks - 1; b >= 0; --b) {
      if (b < core_.cfg.num_blocks - 1 && pi >= 0) g = core_.pools[size_t(pi--)].backward(g);
      for (int k = core_.cfg.cells_per_block - 1; k >= 0; --k, --ci) {
        g = core_.proj[size_t(ci)].backward(g);
        g = cells_[size_t(ci)].backward(g);
      }
    }
    core_.stem.backward(g);
  }

  const NetworkConfig& config() const { return core_.cfg; }
  const std::vector<DiscreteCell>& genotype() const { return genotype_; }

  void collect_params(std::vector<ParamView>* out) {
    core_.collect_head_stem_params(out);
    for (int i = 0; i < core_.cfg.num_cells(); ++i) {
      cells_[size_t(i)].collect_params(core_.cell_prefix(i), out);
      core_.collect_proj_params(i, core_.proj_prefix(i), out);
    }
  }
  void collect_buffers(std::vector<ParamView>* out) {
    for (int i = 0; i < core_.cfg.num_cells(); ++i) {
      cells_[size_t(i)].collect_buffers(core_.cell_prefix(i), out);
    }
  }

  void release_state() {
    core_.release_state();
    for (auto& c : cells_) c.release_state();
  }

 private:
  detail::BackboneCore core_;
  std::vector<DiscreteCellModule> cells_;
  std::vector<DiscreteCell> genotype_;
  int t_in_ = 0;
};

inline size_t total_param_count(const std::vector<ParamView>& views) {
  size_t n = 0;
  for (const auto& v : views) n += v.count;
  return n;
}

}  // namespace autohr
