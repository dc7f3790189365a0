#include "trace/graph.hpp"

#include <cmath>
#include <stdexcept>

#include "trace/kernels.hpp"
#include "trace/numeric.hpp"

namespace trace {

namespace {
void check_rank2(const Tensor& t, const char* where) {
  if (t.rank() != 2)
    throw std::invalid_argument(std::string(where) + ": expected rank-2 tensor, got " +
                                t.shape_str());
}
}  // namespace

VarId Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<VarId>(nodes_.size() - 1);
}

Tensor& Graph::grad_buf(VarId id) {
  Node& n = at(id);
  if (!n.has_grad) {
    n.grad = Tensor::zeros_like(n.value);
    n.has_grad = true;
  }
  return n.grad;
}

const Tensor& Graph::grad(VarId id) const {
  const Node& n = at(id);
  if (!n.has_grad) throw std::logic_error("gradient not computed for node");
  return n.grad;
}

double Graph::scalar(VarId id) const {
  const Tensor& v = value(id);
  if (v.size() != 1) throw std::logic_error("scalar() on tensor of size " + v.shape_str());
  return v[0];
}

VarId Graph::param(const std::string& name, const Tensor& value, bool trainable) {
  Node n;
  n.kind = OpKind::leaf;
  n.value = value;
  n.name = name;
  n.trainable = trainable;
  return push(std::move(n));
}

VarId Graph::param(const ParamStore& store, const std::string& name) {
  return param(name, store.value(name), store.trainable(name));
}

VarId Graph::input(Tensor value) {
  Node n;
  n.kind = OpKind::leaf;
  n.value = std::move(value);
  return push(std::move(n));
}

VarId Graph::add(VarId a, VarId b) {
  require_same_shape(value(a), value(b), "add");
  Node n;
  n.kind = OpKind::add;
  n.in = {a, b, -1};
  n.value = value(a);
  const double* pb = value(b).data();
  double* out = n.value.data();
  for (std::size_t i = 0; i < n.value.size(); ++i) out[i] += pb[i];
  return push(std::move(n));
}

VarId Graph::mul(VarId a, VarId b) {
  require_same_shape(value(a), value(b), "mul");
  Node n;
  n.kind = OpKind::mul;
  n.in = {a, b, -1};
  n.value = value(a);
  const double* pb = value(b).data();
  double* out = n.value.data();
  for (std::size_t i = 0; i < n.value.size(); ++i) out[i] *= pb[i];
  return push(std::move(n));
}

VarId Graph::affine(VarId x, double scale, double shift) {
  Node n;
  n.kind = OpKind::affine;
  n.in = {x, -1, -1};
  n.p0 = scale;
  n.p1 = shift;
  n.value = value(x);
  for (double& v : n.value.values()) v = scale * v + shift;
  return push(std::move(n));
}

VarId Graph::matmul(VarId a, VarId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  check_rank2(ta, "matmul");
  check_rank2(tb, "matmul");
  if (ta.cols() != tb.rows())
    throw std::invalid_argument("matmul: inner dimensions disagree " + ta.shape_str() + " vs " +
                                tb.shape_str());
  Node n;
  n.kind = OpKind::matmul;
  n.in = {a, b, -1};
  n.value = Tensor({ta.rows(), tb.cols()});
  kernels::matmul(ta.data(), tb.data(), n.value.data(), ta.rows(), ta.cols(), tb.cols());
  return push(std::move(n));
}

VarId Graph::bias_add(VarId x, VarId b) {
  const Tensor& tx = value(x);
  const Tensor& tb = value(b);
  if (tb.rank() != 1 || tb.size() != tx.cols())
    throw std::invalid_argument("bias_add: bias " + tb.shape_str() + " does not match " +
                                tx.shape_str());
  Node n;
  n.kind = OpKind::bias_add;
  n.in = {x, b, -1};
  n.value = tx;
  double* out = n.value.data();
  const double* pb = tb.data();
  std::size_t rows = tx.rows(), cols = tx.cols();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += pb[c];
  return push(std::move(n));
}

VarId Graph::gelu(VarId x) {
  Node n;
  n.kind = OpKind::gelu;
  n.in = {x, -1, -1};
  n.value = Tensor::zeros_like(value(x));
  kernels::gelu(value(x).data(), n.value.data(), n.value.size());
  return push(std::move(n));
}

VarId Graph::sigmoid(VarId x) {
  Node n;
  n.kind = OpKind::sigmoid;
  n.in = {x, -1, -1};
  n.value = value(x);
  for (double& v : n.value.values()) v = 1.0 / (1.0 + std::exp(-v));
  return push(std::move(n));
}

VarId Graph::log(VarId x) {
  Node n;
  n.kind = OpKind::log;
  n.in = {x, -1, -1};
  n.value = value(x);
  for (double& v : n.value.values()) v = std::log(v);
  return push(std::move(n));
}

VarId Graph::clamp(VarId x, double lo, double hi) {
  Node n;
  n.kind = OpKind::clamp;
  n.in = {x, -1, -1};
  n.p0 = lo;
  n.p1 = hi;
  n.value = value(x);
  for (double& v : n.value.values()) v = v < lo ? lo : (v > hi ? hi : v);
  return push(std::move(n));
}

VarId Graph::layer_norm(VarId x, VarId gamma, VarId beta, double eps) {
  const Tensor& tx = value(x);
  std::size_t rows = tx.rows(), cols = tx.cols();
  if (cols == 0) throw std::invalid_argument("layer_norm: empty rows");
  if (value(gamma).size() != cols || value(beta).size() != cols)
    throw std::invalid_argument("layer_norm: affine params do not match row length " +
                                tx.shape_str());
  if (eps <= 0) throw std::invalid_argument("layer_norm: eps must be positive");
  Node n;
  n.kind = OpKind::layer_norm;
  n.in = {x, gamma, beta, };
  n.p0 = eps;
  n.value = tx;
  const double* g = value(gamma).data();
  const double* b = value(beta).data();
  double* out = n.value.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = tx.data() + r * cols;
    double* yr = out + r * cols;
    double mu = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mu += xr[c];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      double d = xr[c] - mu;
      var += d * d;
    }
    var /= static_cast<double>(cols);
    double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) yr[c] = g[c] * ((xr[c] - mu) * inv) + b[c];
  }
  return push(std::move(n));
}

VarId Graph::softmax(VarId x) {
  const Tensor& tx = value(x);
  std::vector<std::uint8_t> all(tx.cols(), 1);
  return softmax_masked(x, all);
}

VarId Graph::softmax_masked(VarId x, const std::vector<std::uint8_t>& col_mask) {
  const Tensor& tx = value(x);
  std::size_t rows = tx.rows(), cols = tx.cols();
  if (col_mask.size() != cols)
    throw std::invalid_argument("softmax: column mask does not match row length");
  Node n;
  n.kind = OpKind::softmax;
  n.in = {x, -1, -1};
  n.mask = col_mask;
  n.value = Tensor::zeros_like(tx);
  for (std::size_t r = 0; r < rows; ++r)
    stable_softmax_masked(tx.data() + r * cols, col_mask.data(), n.value.data() + r * cols, cols);
  return push(std::move(n));
}

VarId Graph::dropout(VarId x, double p, RunMode mode, RngStream& rng) {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout: rate must be in [0, 1)");
  if (mode == RunMode::eval || p == 0.0) return x;  // identity, nothing recorded
  Node n;
  n.kind = OpKind::dropout;
  n.in = {x, -1, -1};
  n.p0 = 1.0 / (1.0 - p);
  n.value = value(x);
  n.mask.resize(n.value.size());
  double* out = n.value.data();
  for (std::size_t i = 0; i < n.value.size(); ++i) {
    bool keep = rng.uniform() >= p;
    n.mask[i] = keep ? 1 : 0;
    out[i] = keep ? out[i] * n.p0 : 0.0;
  }
  return push(std::move(n));
}

VarId Graph::masked_mean_rows(VarId x, const std::vector<std::uint8_t>& row_mask) {
  const Tensor& tx = value(x);
  check_rank2(tx, "masked_mean_rows");
  if (row_mask.size() != tx.rows())
    throw std::invalid_argument("masked_mean_rows: mask does not match row count");
  std::size_t count = 0;
  for (auto m : row_mask) count += m ? 1 : 0;
  if (count == 0) throw std::invalid_argument("masked_mean_rows: no rows selected");
  Node n;
  n.kind = OpKind::masked_mean_rows;
  n.in = {x, -1, -1};
  n.mask = row_mask;
  n.s0 = count;
  std::size_t cols = tx.cols();
  n.value = Tensor({cols});
  double* out = n.value.data();
  for (std::size_t r = 0; r < tx.rows(); ++r) {
    if (!row_mask[r]) continue;
    const double* xr = tx.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) out[c] += xr[c];
  }
  for (std::size_t c = 0; c < cols; ++c) out[c] /= static_cast<double>(count);
  return push(std::move(n));
}

VarId Graph::gather_rows(VarId table, const std::vector<std::size_t>& rows) {
  const Tensor& tt = value(table);
  check_rank2(tt, "gather_rows");
  if (rows.empty()) throw std::invalid_argument("gather_rows: empty index list");
  for (std::size_t r : rows)
    if (r >= tt.rows()) throw std::invalid_argument("gather_rows: index out of range");
  Node n;
  n.kind = OpKind::gather_rows;
  n.in = {table, -1, -1};
  n.ids = rows;
  std::size_t cols = tt.cols();
  n.value = Tensor({rows.size(), cols});
  double* out = n.value.data();
  for (std::size_t t = 0; t < rows.size(); ++t)
    for (std::size_t c = 0; c < cols; ++c) out[t * cols + c] = tt.at(rows[t], c);
  return push(std::move(n));
}

VarId Graph::concat(VarId a, VarId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  Node n;
  n.kind = OpKind::concat;
  n.in = {a, b, -1};
  if (ta.rank() == 1 && tb.rank() == 1) {
    n.value = Tensor({ta.size() + tb.size()});
    double* out = n.value.data();
    for (std::size_t i = 0; i < ta.size(); ++i) out[i] = ta[i];
    for (std::size_t i = 0; i < tb.size(); ++i) out[ta.size() + i] = tb[i];
  } else if (ta.rank() == 2 && tb.rank() == 2 && ta.rows() == tb.rows()) {
    std::size_t rows = ta.rows(), ca = ta.cols(), cb = tb.cols();
    n.value = Tensor({rows, ca + cb});
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < ca; ++c) n.value.at(r, c) = ta.at(r, c);
      for (std::size_t c = 0; c < cb; ++c) n.value.at(r, ca + c) = tb.at(r, c);
    }
  } else {
    throw std::invalid_argument("concat: incompatible shapes " + ta.shape_str() + " vs " +
                                tb.shape_str());
  }
  return push(std::move(n));
}

VarId Graph::slice_cols(VarId x, std::size_t start, std::size_t width) {
  const Tensor& tx = value(x);
  check_rank2(tx, "slice_cols");
  if (start + width > tx.cols()) throw std::invalid_argument("slice_cols: range out of bounds");
  Node n;
  n.kind = OpKind::slice_cols;
  n.in = {x, -1, -1};
  n.s0 = start;
  n.s1 = width;
  n.value = Tensor({tx.rows(), width});
  for (std::size_t r = 0; r < tx.rows(); ++r)
    for (std::size_t c = 0; c < width; ++c) n.value.at(r, c) = tx.at(r, start + c);
  return push(std::move(n));
}

VarId Graph::transpose(VarId x) {
  const Tensor& tx = value(x);
  check_rank2(tx, "transpose");
  Node n;
  n.kind = OpKind::transpose;
  n.in = {x, -1, -1};
  n.value = Tensor({tx.cols(), tx.rows()});
  for (std::size_t r = 0; r < tx.rows(); ++r)
    for (std::size_t c = 0; c < tx.cols(); ++c) n.value.at(c, r) = tx.at(r, c);
  return push(std::move(n));
}

VarId Graph::sum(VarId x) {
  Node n;
  n.kind = OpKind::sum;
  n.in = {x, -1, -1};
  double s = 0.0;
  for (double v : value(x).values()) s += v;
  n.value = Tensor::scalar(s);
  return push(std::move(n));
}

VarId Graph::mean(VarId x) {
  Node n;
  n.kind = OpKind::mean;
  n.in = {x, -1, -1};
  double s = 0.0;
  for (double v : value(x).values()) s += v;
  n.value = Tensor::scalar(s / static_cast<double>(value(x).size()));
  return push(std::move(n));
}

VarId Graph::reshape(VarId x, std::vector<std::size_t> shape) {
  Node n;
  n.kind = OpKind::reshape;
  n.in = {x, -1, -1};
  n.value = Tensor(std::move(shape), value(x).values());
  return push(std::move(n));
}

VarId Graph::weight_norm(VarId v, VarId g) {
  const Tensor& tv = value(v);
  const Tensor& tg = value(g);
  check_rank2(tv, "weight_norm");
  if (tg.rank() != 1 || tg.size() != tv.rows())
    throw std::invalid_argument("weight_norm: gains " + tg.shape_str() +
                                " do not match direction rows " + tv.shape_str());
  Node n;
  n.kind = OpKind::weight_norm;
  n.in = {v, g, -1};
  n.value = tv;
  std::size_t cols = tv.cols();
  for (std::size_t r = 0; r < tv.rows(); ++r) {
    const double* vr = tv.data() + r * cols;
    double norm2 = 0.0;
    for (std::size_t c = 0; c < cols; ++c) norm2 += vr[c] * vr[c];
    double norm = std::sqrt(norm2);
    if (norm == 0.0)
      throw std::invalid_argument("weight_norm: row " + std::to_string(r) +
                                  " of v has zero norm");
    double s = tg[r] / norm;
    double* out = n.value.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) out[c] = s * vr[c];
  }
  return push(std::move(n));
}

VarId Graph::select_st(VarId features, VarId probs) {
  const Tensor& tf = value(features);
  const Tensor& tp = value(probs);
  check_rank2(tf, "select_st");
  if (tp.rank() != 1 || tp.size() != tf.rows())
    throw std::invalid_argument("select_st: probs do not match feature rows");
  Node n;
  n.kind = OpKind::select_st;
  n.in = {features, probs, -1};
  n.s0 = argmax_index(tp.data(), tp.size());
  std::size_t cols = tf.cols();
  n.value = Tensor({cols});
  for (std::size_t c = 0; c < cols; ++c) n.value[c] = tf.at(n.s0, c);
  return push(std::move(n));
}

VarId Graph::linear(VarId x, VarId w, VarId b) {
  const Tensor& tx = value(x);
  if (tx.rank() == 1) {
    VarId row = reshape(x, {1, tx.size()});
    VarId out = bias_add(matmul(row, w), b);
    return reshape(out, {value(out).cols()});
  }
  return bias_add(matmul(x, w), b);
}

void Graph::backward(VarId loss) {
  if (value(loss).size() != 1)
    throw std::logic_error("backward: loss must be a single scalar, got " +
                           value(loss).shape_str());
  std::vector<std::uint8_t> reachable(nodes_.size(), 0);
  reachable[static_cast<std::size_t>(loss)] = 1;
  grad_buf(loss)[0] = 1.0;
  for (std::size_t i = static_cast<std::size_t>(loss) + 1; i-- > 0;) {
    if (!reachable[i]) continue;
    backward_node(i, reachable);
  }
}

void Graph::backward_node(std::size_t i, std::vector<std::uint8_t>& reachable) {
  Node& n = nodes_[i];
  if (n.kind == OpKind::leaf) return;
  const Tensor& g = n.grad;
  auto mark = [&](VarId id) { reachable[static_cast<std::size_t>(id)] = 1; };

  switch (n.kind) {
    case OpKind::add: {
      Tensor& ga = grad_buf(n.in[0]);
      Tensor& gb = grad_buf(n.in[1]);
      for (std::size_t j = 0; j < g.size(); ++j) {
        ga[j] += g[j];
        gb[j] += g[j];
      }
      mark(n.in[0]);
      mark(n.in[1]);
      break;
    }
    case OpKind::mul: {
      const Tensor& a = value(n.in[0]);
      const Tensor& b = value(n.in[1]);
      Tensor& ga = grad_buf(n.in[0]);
      Tensor& gb = grad_buf(n.in[1]);
      for (std::size_t j = 0; j < g.size(); ++j) {
        ga[j] += g[j] * b[j];
        gb[j] += g[j] * a[j];
      }
      mark(n.in[0]);
      mark(n.in[1]);
      break;
    }
    case OpKind::affine: {
      Tensor& gx = grad_buf(n.in[0]);
      for (std::size_t j = 0; j < g.size(); ++j) gx[j] += n.p0 * g[j];
      mark(n.in[0]);
      break;
    }
    case OpKind::matmul: {
      const Tensor& a = value(n.in[0]);
      const Tensor& b = value(n.in[1]);
      Tensor& ga = grad_buf(n.in[0]);
      Tensor& gb = grad_buf(n.in[1]);
      // gA += g * B^T ; gB += A^T * g
      kernels::matmul_a_bt(g.data(), b.data(), ga.data(), a.rows(), b.cols(), a.cols(), true);
      kernels::matmul_at_b(a.data(), g.data(), gb.data(), a.rows(), a.cols(), b.cols(), true);
      mark(n.in[0]);
      mark(n.in[1]);
      break;
    }
    case OpKind::bias_add: {
      Tensor& gx = grad_buf(n.in[0]);
      Tensor& gb = grad_buf(n.in[1]);
      std::size_t rows = g.rows(), cols = g.cols();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
          gx[r * cols + c] += g[r * cols + c];
          gb[c] += g[r * cols + c];
        }
      mark(n.in[0]);
      mark(n.in[1]);
      break;
    }
    case OpKind::gelu: {
      const Tensor& x = value(n.in[0]);
      Tensor& gx = grad_buf(n.in[0]);
      kernels::gelu_grad(x.data(), g.data(), gx.data(), g.size());
      mark(n.in[0]);
      break;
    }
    case OpKind::sigmoid: {
      Tensor& gx = grad_buf(n.in[0]);
      for (std::size_t j = 0; j < g.size(); ++j)
        gx[j] += g[j] * n.value[j] * (1.0 - n.value[j]);
      mark(n.in[0]);
      break;
    }
    case OpKind::log: {
      const Tensor& x = value(n.in[0]);
      Tensor& gx = grad_buf(n.in[0]);
      for (std::size_t j = 0; j < g.size(); ++j) gx[j] += g[j] / x[j];
      mark(n.in[0]);
      break;
    }
    case OpKind::clamp: {
      const Tensor& x = value(n.in[0]);
      Tensor& gx = grad_buf(n.in[0]);
      for (std::size_t j = 0; j < g.size(); ++j)
        if (x[j] >= n.p0 && x[j] <= n.p1) gx[j] += g[j];
      mark(n.in[0]);
      break;
    }
    case OpKind::layer_norm: {
      const Tensor& x = value(n.in[0]);
      const Tensor& gamma = value(n.in[1]);
      Tensor& gx = grad_buf(n.in[0]);
      Tensor& ggamma = grad_buf(n.in[1]);
      Tensor& gbeta = grad_buf(n.in[2]);
      std::size_t rows = x.rows(), cols = x.cols();
      std::vector<double> xhat(cols), gxh(cols);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.data() + r * cols;
        const double* gr = g.data() + r * cols;
        double mu = 0.0;
        for (std::size_t c = 0; c < cols; ++c) mu += xr[c];
        mu /= static_cast<double>(cols);
        double var = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
          double d = xr[c] - mu;
          var += d * d;
        }
        var /= static_cast<double>(cols);
        double inv = 1.0 / std::sqrt(var + n.p0);
        double m1 = 0.0, m2 = 0.0;  // mean(gxh), mean(gxh * xhat)
        for (std::size_t c = 0; c < cols; ++c) {
          xhat[c] = (xr[c] - mu) * inv;
          gxh[c] = gr[c] * gamma[c];
          m1 += gxh[c];
          m2 += gxh[c] * xhat[c];
          ggamma[c] += gr[c] * xhat[c];
          gbeta[c] += gr[c];
        }
        m1 /= static_cast<double>(cols);
        m2 /= static_cast<double>(cols);
        double* gxr = gx.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) gxr[c] += inv * (gxh[c] - m1 - xhat[c] * m2);
      }
      mark(n.in[0]);
      mark(n.in[1]);
      mark(n.in[2]);
      break;
    }
    case OpKind::softmax: {
      Tensor& gx = grad_buf(n.in[0]);
      std::size_t rows = g.rows(), cols = g.cols();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* yr = n.value.data() + r * cols;
        const double* gr = g.data() + r * cols;
        double s = 0.0;
        for (std::size_t c = 0; c < cols; ++c)
          if (n.mask[c]) s += gr[c] * yr[c];
        double* gxr = gx.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c)
          if (n.mask[c]) gxr[c] += yr[c] * (gr[c] - s);
      }
      mark(n.in[0]);
      break;
    }
    case OpKind::dropout: {
      Tensor& gx = grad_buf(n.in[0]);
      for (std::size_t j = 0; j < g.size(); ++j)
        if (n.mask[j]) gx[j] += g[j] * n.p0;
      mark(n.in[0]);
      break;
    }
    case OpKind::masked_mean_rows: {
      const Tensor& x = value(n.in[0]);
      Tensor& gx = grad_buf(n.in[0]);
      std::size_t cols = x.cols();
      double scale = 1.0 / static_cast<double>(n.s0);
      for (std::size_t r = 0; r < x.rows(); ++r) {
        if (!n.mask[r]) continue;
        for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += g[c] * scale;
      }
      mark(n.in[0]);
      break;
    }
    case OpKind::gather_rows: {
      const Tensor& table = value(n.in[0]);
      Tensor& gt = grad_buf(n.in[0]);
      std::size_t cols = table.cols();
      for (std::size_t t = 0; t < n.ids.size(); ++t)
        for (std::size_t c = 0; c < cols; ++c) gt[n.ids[t] * cols + c] += g[t * cols + c];
      mark(n.in[0]);
      break;
    }
    case OpKind::concat: {
      const Tensor& a = value(n.in[0]);
      const Tensor& b = value(n.in[1]);
      Tensor& ga = grad_buf(n.in[0]);
      Tensor& gb = grad_buf(n.in[1]);
      if (a.rank() == 1) {
        for (std::size_t j = 0; j < a.size(); ++j) ga[j] += g[j];
        for (std::size_t j = 0; j < b.size(); ++j) gb[j] += g[a.size() + j];
      } else {
        std::size_t rows = a.rows(), ca = a.cols(), cb = b.cols();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < ca; ++c) ga[r * ca + c] += g[r * (ca + cb) + c];
          for (std::size_t c = 0; c < cb; ++c) gb[r * cb + c] += g[r * (ca + cb) + ca + c];
        }
      }
      mark(n.in[0]);
      mark(n.in[1]);
      break;
    }
    case OpKind::slice_cols: {
      const Tensor& x = value(n.in[0]);
      Tensor& gx = grad_buf(n.in[0]);
      std::size_t cols = x.cols();
      for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < n.s1; ++c) gx[r * cols + n.s0 + c] += g[r * n.s1 + c];
      mark(n.in[0]);
      break;
    }
    case OpKind::transpose: {
      const Tensor& x = value(n.in[0]);
      Tensor& gx = grad_buf(n.in[0]);
      for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c) gx[r * x.cols() + c] += g.at(c, r);
      mark(n.in[0]);
      break;
    }
    case OpKind::sum: {
      Tensor& gx = grad_buf(n.in[0]);
      for (std::size_t j = 0; j < gx.size(); ++j) gx[j] += g[0];
      mark(n.in[0]);
      break;
    }
    case OpKind::mean: {
      Tensor& gx = grad_buf(n.in[0]);
      double s = g[0] / static_cast<double>(gx.size());
      for (std::size_t j = 0; j < gx.size(); ++j) gx[j] += s;
      mark(n.in[0]);
      break;
    }
    case OpKind::reshape: {
      Tensor& gx = grad_buf(n.in[0]);
      for (std::size_t j = 0; j < g.size(); ++j) gx[j] += g[j];
      mark(n.in[0]);
      break;
    }
    case OpKind::weight_norm: {
      const Tensor& v = value(n.in[0]);
      const Tensor& gains = value(n.in[1]);
      Tensor& gv = grad_buf(n.in[0]);
      Tensor& gg = grad_buf(n.in[1]);
      std::size_t cols = v.cols();
      for (std::size_t r = 0; r < v.rows(); ++r) {
        const double* vr = v.data() + r * cols;
        const double* gr = g.data() + r * cols;
        double norm2 = 0.0, dot = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
          norm2 += vr[c] * vr[c];
          dot += gr[c] * vr[c];
        }
        double norm = std::sqrt(norm2);
        gg[r] += dot / norm;
        double s1 = gains[r] / norm;
        double s2 = gains[r] * dot / (norm2 * norm);
        double* gvr = gv.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) gvr[c] += s1 * gr[c] - s2 * vr[c];
      }
      mark(n.in[0]);
      mark(n.in[1]);
      break;
    }
    case OpKind::select_st: {
      // Straight-through: the backward pass is the soft mixture's.
      const Tensor& features = value(n.in[0]);
      const Tensor& probs = value(n.in[1]);
      Tensor& gf = grad_buf(n.in[0]);
      Tensor& gp = grad_buf(n.in[1]);
      std::size_t cols = features.cols();
      for (std::size_t r = 0; r < features.rows(); ++r) {
        double dot = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
          gf[r * cols + c] += probs[r] * g[c];
          dot += features.at(r, c) * g[c];
        }
        gp[r] += dot;
      }
      mark(n.in[0]);
      mark(n.in[1]);
      break;
    }
    case OpKind::leaf:
      break;
  }
}

void Graph::accumulate_leaf_grads(GradStore& out) const {
  for (const Node& n : nodes_) {
    if (n.kind == OpKind::leaf && !n.name.empty() && n.has_grad) out.accumulate(n.name, n.grad);
  }
}

}  // namespace trace
