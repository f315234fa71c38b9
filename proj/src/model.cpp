#include "spaorb/model.hpp"

#include "spaorb/errors.hpp"

#include <array>
#include <cmath>
#include <optional>
#include <random>

namespace spaorb::model {

namespace {

using RM = RowMajorMatrix;
using RowVec = Eigen::RowVectorXd;

constexpr double kLayerNormEps = 1e-5;
constexpr std::array<const char *, 2> kScaleNames = {"fine", "coarse"};

struct ConvIndex {
  std::size_t root_w, root_b, kernel_w1, kernel_b1, kernel_w2, kernel_b2;
  std::optional<std::size_t> shortcut;
  int d_in;
};

struct Layout {
  std::vector<TensorSpec> manifest;
  std::size_t proj_w1, proj_b1, proj_w2, proj_b2, proj_gain, proj_bias;
  std::array<std::vector<ConvIndex>, 2> conv;
  std::size_t fuse_w, fuse_b, fuse_gain, fuse_bias;
  std::vector<std::size_t> readout_w, readout_b;
  std::size_t out_w, out_b;
};

Layout build_layout(const ModelConfig &cfg) {
  Layout l;
  std::size_t offset = 0;
  auto add = [&](std::string name, int rows, int cols) {
    l.manifest.push_back({std::move(name), rows, cols, offset});
    offset += static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
    return l.manifest.size() - 1;
  };
  const int node_w = cfg.feature_config().node_width();
  const int edge_w = cfg.feature_config().edge_width();
  const int h = cfg.hidden_dim;

  l.proj_w1 = add("proj.w1", cfg.proj_dim, node_w);
  l.proj_b1 = add("proj.b1", 1, cfg.proj_dim);
  l.proj_w2 = add("proj.w2", cfg.proj_dim, cfg.proj_dim);
  l.proj_b2 = add("proj.b2", 1, cfg.proj_dim);
  l.proj_gain = add("proj.ln_gain", 1, cfg.proj_dim);
  l.proj_bias = add("proj.ln_bias", 1, cfg.proj_dim);
  for (std::size_t s = 0; s < 2; ++s) {
    int d_in = cfg.proj_dim + node_w;
    for (int layer = 0; layer < cfg.gnn_layers; ++layer) {
      const std::string p = std::string(kScaleNames[s]) + "." + std::to_string(layer) + ".";
      ConvIndex c{};
      c.d_in = d_in;
      c.root_w = add(p + "root_w", h, d_in);
      c.root_b = add(p + "root_b", 1, h);
      c.kernel_w1 = add(p + "kernel_w1", cfg.kernel_hidden, edge_w);
      c.kernel_b1 = add(p + "kernel_b1", 1, cfg.kernel_hidden);
      c.kernel_w2 = add(p + "kernel_w2", h * d_in, cfg.kernel_hidden);
      c.kernel_b2 = add(p + "kernel_b2", 1, h * d_in);
      if (d_in != h) {
        c.shortcut = add(p + "shortcut", h, d_in);
      }
      l.conv[s].push_back(c);
      d_in = h;
    }
  }
  l.fuse_w = add("fusion.w", h, 2 * h);
  l.fuse_b = add("fusion.b", 1, h);
  l.fuse_gain = add("fusion.ln_gain", 1, h);
  l.fuse_bias = add("fusion.ln_bias", 1, h);
  int width = 3 * h + edge_w + features::FeatureConfig::pair_width();
  for (int k = 0; k < cfg.readout_layers; ++k) {
    l.readout_w.push_back(add("readout." + std::to_string(k) + ".w", cfg.readout_hidden, width));
    l.readout_b.push_back(add("readout." + std::to_string(k) + ".b", 1, cfg.readout_hidden));
    width = cfg.readout_hidden;
  }
  l.out_w = add("readout.out.w", 1, width);
  l.out_b = add("readout.out.b", 1, 1);
  return l;
}

// Read/write views over a flat buffer in manifest layout.
struct View {
  const std::vector<TensorSpec> &manifest;
  double *base;
  TensorMap operator[](std::size_t idx) const {
    return {base + manifest[idx].offset, manifest[idx].rows, manifest[idx].cols};
  }
  Eigen::Map<RowVec> row(std::size_t idx) const { return {base + manifest[idx].offset, manifest[idx].cols}; }
};

struct ConstView {
  const std::vector<TensorSpec> &manifest;
  const double *base;
  ConstTensorMap operator[](std::size_t idx) const {
    return {base + manifest[idx].offset, manifest[idx].rows, manifest[idx].cols};
  }
  Eigen::Map<const RowVec> row(std::size_t idx) const { return {base + manifest[idx].offset, manifest[idx].cols}; }
};

RM tanh_of(const RM &x) { return x.array().tanh().matrix(); }

RM tanh_backward(const RM &d_out, const RM &out) {
  return (d_out.array() * (1.0 - out.array().square())).matrix();
}

struct LayerNormCache {
  RM xhat;
  Vector inv;
};

RM layer_norm(const RM &x, const Eigen::Map<const RowVec> &gain, const Eigen::Map<const RowVec> &bias,
              LayerNormCache &cache) {
  const Eigen::Index n = x.rows();
  const double d = static_cast<double>(x.cols());
  cache.xhat.resize(x.rows(), x.cols());
  cache.inv.resize(n);
  RM y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mean = x.row(i).sum() / d;
    const double var = (x.row(i).array() - mean).square().sum() / d;
    cache.inv(i) = 1.0 / std::sqrt(var + kLayerNormEps);
    cache.xhat.row(i) = (x.row(i).array() - mean) * cache.inv(i);
    y.row(i) = cache.xhat.row(i).cwiseProduct(gain) + bias;
  }
  return y;
}

RM layer_norm_backward(const RM &dy, const LayerNormCache &cache, const Eigen::Map<const RowVec> &gain,
                       Eigen::Map<RowVec> d_gain, Eigen::Map<RowVec> d_bias) {
  const double d = static_cast<double>(dy.cols());
  d_gain += dy.cwiseProduct(cache.xhat).colwise().sum();
  d_bias += dy.colwise().sum();
  RM dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const RowVec dxhat = dy.row(i).cwiseProduct(gain);
    const double m1 = dxhat.sum() / d;
    const double m2 = dxhat.cwiseProduct(cache.xhat.row(i)).sum() / d;
    dx.row(i) = cache.inv(i) * (dxhat.array() - m1 - cache.xhat.row(i).array() * m2);
  }
  return dx;
}

RM affine(const RM &x, const ConstTensorMap &w, const Eigen::Map<const RowVec> &b) {
  RM y = x * w.transpose();
  y.rowwise() += b;
  return y;
}

struct ConvCache {
  RM x_in;
  RM u;  // kernel-MLP hidden activations, E x kh
  RM z;  // per node: (hidden x kh) contraction of kernel_w2 with x_j, row-major
  RM xb; // per node: reshape(kernel_b2) x_j
  RM t;  // tanh(pre-activation)
  RM x_out;
};

struct ForwardCache {
  RM x0;
  RM t1;
  LayerNormCache proj_ln;
  RM x_node;
  std::array<std::vector<ConvCache>, 2> conv;
  RM fuse_in;
  LayerNormCache fuse_ln;
  RM fused;
  RM readout_in;
  std::vector<RM> readout_act;
  Vector a_upper;
  Matrix a;
  Matrix m;
};

const std::vector<features::Edge> &scale_edges(const features::FeatureGraph &fg, std::size_t s) {
  return s == 0 ? fg.fine_edges : fg.coarse_edges;
}

const Matrix &scale_edge_x(const features::FeatureGraph &fg, std::size_t s) {
  return s == 0 ? fg.fine_edge_x : fg.coarse_edge_x;
}

RM conv_forward(const ConstView &p, const ConvIndex &ci, int hidden, int kh, const RM &x,
                const std::vector<features::Edge> &edges, const Matrix &edge_x, ConvCache &cache) {
  const int d_in = ci.d_in;
  const Eigen::Index n = x.rows();
  cache.x_in = x;
  if (edges.empty()) {
    cache.u = RM::Zero(0, kh);
  } else {
    cache.u = tanh_of(affine(RM(edge_x), p[ci.kernel_w1], p.row(ci.kernel_b1)));
  }
  const auto w2 = p[ci.kernel_w2];
  cache.z.resize(n, static_cast<Eigen::Index>(hidden) * kh);
  for (int o = 0; o < hidden; ++o) {
    cache.z.middleCols(static_cast<Eigen::Index>(o) * kh, kh) = x * w2.middleRows(static_cast<Eigen::Index>(o) * d_in, d_in);
  }
  const ConstTensorMap b2(p.row(ci.kernel_b2).data(), hidden, d_in);
  cache.xb = x * b2.transpose();
  RM pre = affine(x, p[ci.root_w], p.row(ci.root_b));
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto [i, j] = edges[e];
    const ConstTensorMap zj(cache.z.row(j).data(), hidden, kh);
    pre.row(i) += (zj * cache.u.row(static_cast<Eigen::Index>(e)).transpose()).transpose() + cache.xb.row(j);
  }
  cache.t = tanh_of(pre);
  if (ci.shortcut) {
    cache.x_out = cache.t + x * p[*ci.shortcut].transpose();
  } else {
    cache.x_out = cache.t + x;
  }
  return cache.x_out;
}

RM conv_backward(const ConstView &p, const View &g, const ConvIndex &ci, int hidden, int kh, const RM &d_out,
                 const std::vector<features::Edge> &edges, const Matrix &edge_x, const ConvCache &cache) {
  const int d_in = ci.d_in;
  const RM &x = cache.x_in;
  RM dx;
  if (ci.shortcut) {
    g[*ci.shortcut] += d_out.transpose() * x;
    dx = d_out * p[*ci.shortcut];
  } else {
    dx = d_out;
  }
  const RM d_pre = tanh_backward(d_out, cache.t);
  g[ci.root_w] += d_pre.transpose() * x;
  g.row(ci.root_b) += d_pre.colwise().sum();
  dx += d_pre * p[ci.root_w];

  RM dz = RM::Zero(cache.z.rows(), cache.z.cols());
  RM dxb = RM::Zero(cache.xb.rows(), cache.xb.cols());
  RM du(static_cast<Eigen::Index>(edges.size()), kh);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto [i, j] = edges[e];
    const auto row = static_cast<Eigen::Index>(e);
    const ConstTensorMap zj(cache.z.row(j).data(), hidden, kh);
    du.row(row) = d_pre.row(i) * zj;
    TensorMap dzj(dz.row(j).data(), hidden, kh);
    dzj += d_pre.row(i).transpose() * cache.u.row(row);
    dxb.row(j) += d_pre.row(i);
  }
  const auto w2 = p[ci.kernel_w2];
  auto gw2 = g[ci.kernel_w2];
  for (int o = 0; o < hidden; ++o) {
    const auto rows = static_cast<Eigen::Index>(o) * d_in;
    const auto cols = static_cast<Eigen::Index>(o) * kh;
    gw2.middleRows(rows, d_in) += x.transpose() * dz.middleCols(cols, kh);
    dx += dz.middleCols(cols, kh) * w2.middleRows(rows, d_in).transpose();
  }
  const ConstTensorMap b2(p.row(ci.kernel_b2).data(), hidden, d_in);
  TensorMap gb2(g.row(ci.kernel_b2).data(), hidden, d_in);
  gb2 += dxb.transpose() * x;
  dx += dxb * b2;
  if (!edges.empty()) {
    const RM d_kpre = tanh_backward(du, cache.u);
    g[ci.kernel_w1] += d_kpre.transpose() * RM(edge_x);
    g.row(ci.kernel_b1) += d_kpre.colwise().sum();
  }
  return dx;
}

void forward(const ModelParams &params, const ModelConfig &cfg, const Layout &l, const features::FeatureGraph &fg,
             ForwardCache &c) {
  const ConstView p{l.manifest, params.values.data()};
  const int h = cfg.hidden_dim;
  const int n = fg.n;
  if (fg.node_x.cols() != cfg.feature_config().node_width() || fg.pair_edge_x.cols() != cfg.feature_config().edge_width()) {
    throw InvalidInput("model: feature widths do not match the model configuration");
  }

  c.x0 = fg.node_x;
  c.t1 = tanh_of(affine(c.x0, p[l.proj_w1], p.row(l.proj_b1)));
  const RM projected = layer_norm(affine(c.t1, p[l.proj_w2], p.row(l.proj_b2)), p.row(l.proj_gain),
                                  p.row(l.proj_bias), c.proj_ln);
  c.x_node.resize(n, projected.cols() + c.x0.cols());
  c.x_node << projected, c.x0;

  std::array<RM, 2> scale_out;
  for (std::size_t s = 0; s < 2; ++s) {
    c.conv[s].resize(l.conv[s].size());
    RM x = c.x_node;
    for (std::size_t layer = 0; layer < l.conv[s].size(); ++layer) {
      x = conv_forward(p, l.conv[s][layer], h, cfg.kernel_hidden, x, scale_edges(fg, s), scale_edge_x(fg, s),
                       c.conv[s][layer]);
    }
    scale_out[s] = std::move(x);
  }
  c.fuse_in.resize(n, 2 * h);
  c.fuse_in << scale_out[0], scale_out[1];
  c.fused = tanh_of(layer_norm(affine(c.fuse_in, p[l.fuse_w], p.row(l.fuse_b)), p.row(l.fuse_gain),
                               p.row(l.fuse_bias), c.fuse_ln));

  const auto npairs = static_cast<Eigen::Index>(fg.complete_pairs.size());
  const Eigen::Index ew = fg.pair_edge_x.cols();
  c.readout_in.resize(npairs, 3 * h + ew + fg.pair_x.cols());
  for (Eigen::Index k = 0; k < npairs; ++k) {
    const auto [i, j] = fg.complete_pairs[static_cast<std::size_t>(k)];
    c.readout_in.row(k).segment(0, h) = c.fused.row(i) + c.fused.row(j);
    c.readout_in.row(k).segment(h, h) = c.fused.row(i) - c.fused.row(j);
    c.readout_in.row(k).segment(2 * h, h) = c.fused.row(i).cwiseProduct(c.fused.row(j));
    c.readout_in.row(k).segment(3 * h, ew) = fg.pair_edge_x.row(k);
    c.readout_in.row(k).tail(fg.pair_x.cols()) = fg.pair_x.row(k);
  }
  c.readout_act.clear();
  RM act = c.readout_in;
  for (std::size_t k = 0; k < l.readout_w.size(); ++k) {
    act = tanh_of(affine(act, p[l.readout_w[k]], p.row(l.readout_b[k])));
    c.readout_act.push_back(act);
  }
  const RM out = affine(act, p[l.out_w], p.row(l.out_b));
  c.a_upper = out.col(0);
  if (!c.a_upper.allFinite()) {
    throw NumericalFailure("non-finite model output");
  }
  c.a = linalg::unpack_skew(c.a_upper, n);
  c.m = linalg::expm_antisymmetric(c.a);
}

void backward(const ModelParams &params, const ModelConfig &cfg, const Layout &l, const features::FeatureGraph &fg,
              const ForwardCache &c, const Vector &d_upper, std::vector<double> &grad) {
  const ConstView p{l.manifest, params.values.data()};
  const View g{l.manifest, grad.data()};
  const int h = cfg.hidden_dim;
  const int n = fg.n;

  // readout
  const RM d_out = d_upper;
  const RM &last = c.readout_act.empty() ? c.readout_in : c.readout_act.back();
  g[l.out_w] += d_out.transpose() * last;
  g.row(l.out_b) += d_out.colwise().sum();
  RM d_act = d_out * p[l.out_w];
  for (std::size_t k = l.readout_w.size(); k-- > 0;) {
    const RM &input = k == 0 ? c.readout_in : c.readout_act[k - 1];
    const RM d_pre = tanh_backward(d_act, c.readout_act[k]);
    g[l.readout_w[k]] += d_pre.transpose() * input;
    g.row(l.readout_b[k]) += d_pre.colwise().sum();
    d_act = d_pre * p[l.readout_w[k]];
  }
  RM d_fused = RM::Zero(n, h);
  for (std::size_t k = 0; k < fg.complete_pairs.size(); ++k) {
    const auto [i, j] = fg.complete_pairs[k];
    const auto row = static_cast<Eigen::Index>(k);
    const RowVec d_sum = d_act.row(row).segment(0, h);
    const RowVec d_diff = d_act.row(row).segment(h, h);
    const RowVec d_prod = d_act.row(row).segment(2 * h, h);
    d_fused.row(i) += d_sum + d_diff + d_prod.cwiseProduct(c.fused.row(j));
    d_fused.row(j) += d_sum - d_diff + d_prod.cwiseProduct(c.fused.row(i));
  }

  // fusion
  const RM d_ln = tanh_backward(d_fused, c.fused);
  const RM d_fpre = layer_norm_backward(d_ln, c.fuse_ln, p.row(l.fuse_gain), g.row(l.fuse_gain), g.row(l.fuse_bias));
  g[l.fuse_w] += d_fpre.transpose() * c.fuse_in;
  g.row(l.fuse_b) += d_fpre.colwise().sum();
  const RM d_fuse_in = d_fpre * p[l.fuse_w];

  // scales
  RM d_node = RM::Zero(c.x_node.rows(), c.x_node.cols());
  for (std::size_t s = 0; s < 2; ++s) {
    RM d_x = d_fuse_in.middleCols(static_cast<Eigen::Index>(s) * h, h);
    for (std::size_t layer = l.conv[s].size(); layer-- > 0;) {
      d_x = conv_backward(p, g, l.conv[s][layer], h, cfg.kernel_hidden, d_x, scale_edges(fg, s),
                          scale_edge_x(fg, s), c.conv[s][layer]);
    }
    d_node += d_x;
  }

  // node projection; the raw half of x_node has no parameters upstream
  const RM d_proj = d_node.leftCols(cfg.proj_dim);
  const RM d_p2 = layer_norm_backward(d_proj, c.proj_ln, p.row(l.proj_gain), g.row(l.proj_gain), g.row(l.proj_bias));
  g[l.proj_w2] += d_p2.transpose() * c.t1;
  g.row(l.proj_b2) += d_p2.colwise().sum();
  const RM d_p1 = tanh_backward(d_p2 * p[l.proj_w2], c.t1);
  g[l.proj_w1] += d_p1.transpose() * c.x0;
  g.row(l.proj_b1) += d_p1.colwise().sum();
}

struct SampleResult {
  double huber_sum = 0.0;
  double det = 0.0;
  double orb = 0.0;
  std::vector<double> grad;
};

SampleResult evaluate_sample(const ModelParams &params, const ModelConfig &cfg, const Layout &l,
                             const TrainingExample &ex, const losses::LossWeights &w, double huber_scale,
                             double gauge_scale, bool with_gradient) {
  ForwardCache cache;
  try {
    forward(params, cfg, l, ex.graph, cache);
  } catch (const NumericalFailure &) {
    throw NumericalFailure("non-finite loss for record " + ex.id);
  }
  SampleResult r;
  if (ex.a_ref.size() != cache.a_upper.size() || ex.m_ref.rows() != cache.m.rows()) {
    throw InvalidInput("model_gradients: reference shape mismatch for record " + ex.id);
  }
  Vector d_upper(cache.a_upper.size());
  for (Eigen::Index k = 0; k < cache.a_upper.size(); ++k) {
    const double res = cache.a_upper(k) - ex.a_ref(k);
    r.huber_sum += losses::huber_term(res, w.huber_delta);
    d_upper(k) = huber_scale * losses::huber_term_derivative(res, w.huber_delta);
  }
  r.det = losses::det_overlap_loss(cache.m, ex.m_ref, ex.selector);
  r.orb = losses::sign_invariant_orbital_loss(cache.m, ex.m_ref);
  if (!std::isfinite(r.huber_sum) || !std::isfinite(r.det) || !std::isfinite(r.orb)) {
    throw NumericalFailure("non-finite loss for record " + ex.id);
  }
  if (!with_gradient) {
    return r;
  }
  if (w.lambda1 != 0.0 || w.lambda2 != 0.0) {
    Matrix d_m = Matrix::Zero(cache.m.rows(), cache.m.cols());
    if (w.lambda1 != 0.0) {
      d_m += gauge_scale * w.lambda1 * losses::det_overlap_gradient(cache.m, ex.m_ref, ex.selector);
    }
    if (w.lambda2 != 0.0) {
      d_m += gauge_scale * w.lambda2 * losses::sign_invariant_orbital_gradient(cache.m, ex.m_ref);
    }
    const Matrix d_a = linalg::expm_frechet_adjoint(cache.a, d_m);
    d_upper += linalg::pack_upper(d_a - d_a.transpose());
  }
  r.grad.assign(params.values.size(), 0.0);
  backward(params, cfg, l, ex.graph, cache, d_upper, r.grad);
  return r;
}

BatchGradients run_batch(const ModelParams &params, const ModelConfig &cfg,
                         const std::vector<const TrainingExample *> &batch, const losses::LossWeights &weights,
                         Execution exec, bool with_gradient) {
  if (batch.empty()) {
    throw InvalidInput("model_gradients: empty batch");
  }
  weights.validate();
  const Layout l = build_layout(cfg);
  if (l.manifest.size() != params.manifest.size() || params.values.size() != l.manifest.back().offset + l.manifest.back().size()) {
    throw InvalidInput("model: parameters do not match the configuration");
  }
  std::size_t total_pairs = 0;
  for (const auto *ex : batch) {
    total_pairs += ex->graph.complete_pairs.size();
  }
  const double huber_scale = total_pairs ? 1.0 / static_cast<double>(total_pairs) : 0.0;
  const double gauge_scale = 1.0 / static_cast<double>(batch.size());

  auto results = map_indexed<SampleResult>(batch.size(), exec, [&](std::size_t i) {
    return evaluate_sample(params, cfg, l, *batch[i], weights, huber_scale, gauge_scale, with_gradient);
  });

  BatchGradients out;
  double huber_sum = 0.0;
  for (const auto &r : results) {
    huber_sum += r.huber_sum;
    out.loss.det += r.det;
    out.loss.orb += r.orb;
  }
  out.loss.huber = huber_sum * huber_scale;
  out.loss.det *= gauge_scale;
  out.loss.orb *= gauge_scale;
  out.loss.total = out.loss.huber + weights.lambda1 * out.loss.det + weights.lambda2 * out.loss.orb;
  if (with_gradient) {
    out.gradient.assign(params.values.size(), 0.0);
    for (const auto &r : results) {
      for (std::size_t k = 0; k < r.grad.size(); ++k) {
        out.gradient[k] += r.grad[k];
      }
    }
  }
  return out;
}

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

} // namespace

void ModelConfig::validate() const {
  if (hidden_dim < 1 || gnn_layers < 1 || proj_dim < 1 || readout_layers < 0 || readout_hidden < 1 ||
      kernel_hidden < 1 || t_walk < 1 || l_rbf < 2) {
    throw InvalidInput("model config: dimensions must be >= 1 (l_rbf >= 2)");
  }
  if (!(r_fine > 0.0 && r_fine <= r_coarse) || !(rbf_max > rbf_min)) {
    throw InvalidInput("model config: need 0 < r_fine <= r_coarse and rbf_max > rbf_min");
  }
}

features::FeatureConfig ModelConfig::feature_config() const {
  features::FeatureConfig f;
  f.t_walk = t_walk;
  f.l_rbf = l_rbf;
  f.rbf_min = rbf_min;
  f.rbf_max = rbf_max;
  f.r_fine = r_fine;
  f.r_coarse = r_coarse;
  return f;
}

std::vector<TensorSpec> build_manifest(const ModelConfig &cfg) {
  cfg.validate();
  return build_layout(cfg).manifest;
}

std::size_t ModelParams::index_of(const std::string &name) const {
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    if (manifest[i].name == name) {
      return i;
    }
  }
  throw InvalidInput("model: no tensor named '" + name + "'");
}

ModelParams init_params(const ModelConfig &cfg) {
  ModelParams params;
  params.manifest = build_manifest(cfg);
  params.values.assign(params.manifest.back().offset + params.manifest.back().size(), 0.0);
  std::mt19937_64 engine(mix(cfg.seed));
  for (std::size_t idx = 0; idx < params.manifest.size(); ++idx) {
    const auto &spec = params.manifest[idx];
    const auto ends_with = [&](const char *suffix) {
      const std::string s(suffix);
      return spec.name.size() >= s.size() && spec.name.compare(spec.name.size() - s.size(), s.size(), s) == 0;
    };
    auto t = params.tensor(idx);
    if (ends_with("ln_gain")) {
      t.setOnes();
      continue;
    }
    if (spec.rows == 1 && !ends_with(".w")) {
      continue; // biases and layer-norm shifts stay zero
    }
    double fan_in = spec.cols;
    double fan_out = spec.rows;
    if (ends_with("kernel_w2")) {
      // effective map (kernel hidden ⊗ x_j) -> hidden
      fan_out = cfg.hidden_dim;
      fan_in = static_cast<double>(spec.rows / cfg.hidden_dim) * spec.cols;
    }
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      const double u = static_cast<double>(engine() >> 11) * 0x1.0p-53;
      t.data()[i] = limit * (2.0 * u - 1.0);
    }
  }
  return params;
}

ModelOutput forward_features(const ModelParams &params, const ModelConfig &cfg, const features::FeatureGraph &fg) {
  const Layout l = build_layout(cfg);
  if (params.values.size() != l.manifest.back().offset + l.manifest.back().size()) {
    throw InvalidInput("model: parameters do not match the configuration");
  }
  ForwardCache cache;
  forward(params, cfg, l, fg, cache);
  return {cache.a_upper, cache.m};
}

ModelOutput model_forward(const ModelParams &params, const ModelConfig &cfg, const Geometry &geom,
                          const datagen::Matching &matching) {
  return forward_features(params, cfg, features::featurize(geom, matching, cfg.feature_config()));
}

TrainingExample make_example(const datagen::DatasetRecord &record, const ModelConfig &cfg, std::string id) {
  TrainingExample ex;
  ex.id = std::move(id);
  ex.graph = features::featurize(record.geometry, record.matching, cfg.feature_config());
  ex.m_ref = record.m_oo;
  ex.a_ref = linalg::pack_upper(linalg::logm_special_orthogonal(record.m_oo));
  ex.selector = losses::OccupiedSelector::from_matching(record.matching);
  return ex;
}

BatchGradients model_gradients(const ModelParams &params, const ModelConfig &cfg,
                               const std::vector<const TrainingExample *> &batch, const losses::LossWeights &weights,
                               Execution exec) {
  return run_batch(params, cfg, batch, weights, exec, true);
}

BatchLoss batch_loss(const ModelParams &params, const ModelConfig &cfg,
                     const std::vector<const TrainingExample *> &batch, const losses::LossWeights &weights,
                     Execution exec) {
  return run_batch(params, cfg, batch, weights, exec, false).loss;
}

} // namespace spaorb::model
