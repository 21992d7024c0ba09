#include "armd/autodiff.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace armd::ad {

namespace {

std::size_t rows_of(const std::vector<std::size_t>& shape) {
  if (shape.empty() || shape.size() > 3) throw ShapeError("tensor rank must be 1..3");
  std::size_t r = 1;
  for (std::size_t i = 0; i + 1 < shape.size(); ++i) r *= shape[i];
  return r;
}

void require_same(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
  value = Mat::Zero(static_cast<Eigen::Index>(rows_of(shape)), static_cast<Eigen::Index>(shape.back()));
  grad = Mat::Zero(value.rows(), value.cols());
}

// ---------------------------------------------------------------- ParamStore

Tensor& ParamStore::add(const std::string& name, std::vector<std::size_t> shape, double scale, Rng& rng) {
  Tensor& t = add_zeros(name, std::move(shape));
  for (Eigen::Index i = 0; i < t.value.size(); ++i) t.value.data()[i] = rng.uniform(-scale, scale);
  return t;
}

Tensor& ParamStore::add_zeros(const std::string& name, std::vector<std::size_t> shape) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  index_[name] = tensors_.size();
  names_.push_back(name);
  tensors_.emplace_back(std::move(shape));
  return tensors_.back();
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
  return tensors_[it->second];
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
  return tensors_[it->second];
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor& t : tensors_) n += t.size();
  return n;
}

void ParamStore::zero_grad() {
  for (Tensor& t : tensors_) t.grad.setZero(t.value.rows(), t.value.cols());
}

void ParamStore::fill_zero() {
  for (Tensor& t : tensors_) t.value.setZero();
}

namespace {

constexpr char kMagic[8] = {'A', 'R', 'M', 'D', 'P', 'S', '0', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_str(std::string& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}
void put_values(std::string& out, const Mat& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) put_u64(out, std::bit_cast<std::uint64_t>(m.data()[i]));
}

struct Reader {
  const std::string& s;
  std::size_t pos = 0;
  void need(std::size_t n) {
    if (pos + n > s.size()) throw std::runtime_error("parameter file truncated");
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string r = s.substr(pos, n);
    pos += n;
    return r;
  }
  void values(Mat& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = std::bit_cast<double>(u64());
  }
};

}  // namespace

std::string ParamStore::serialize(bool with_moments) const {
  std::string out(kMagic, kMagic + 8);
  put_u32(out, kVersion);
  put_u64(out, step);
  put_str(out, init_scheme);
  put_u32(out, static_cast<std::uint32_t>(tensors_.size()));
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    const Tensor& t = tensors_[i];
    put_str(out, names_[i]);
    put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
    for (std::size_t d : t.shape) put_u64(out, d);
    put_values(out, t.value);
    const bool moments = with_moments && t.adam_m.size() == t.value.size();
    out.push_back(moments ? 1 : 0);
    if (moments) {
      put_values(out, t.adam_m);
      put_values(out, t.adam_v);
    }
  }
  return out;
}

ParamStore ParamStore::deserialize(const std::string& bytes) {
  if (bytes.size() < 8 || !std::equal(kMagic, kMagic + 8, bytes.begin()))
    throw std::runtime_error("not a parameter file (bad magic)");
  Reader r{bytes, 8};
  if (r.u32() != kVersion) throw std::runtime_error("unsupported parameter file version");
  ParamStore p;
  p.step = r.u64();
  p.init_scheme = r.str();
  const std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::string name = r.str();
    const std::uint32_t rank = r.u32();
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(r.u64());
    Tensor& t = p.add_zeros(name, shape);
    r.values(t.value);
    r.need(1);
    const bool moments = bytes[r.pos++] != 0;
    if (moments) {
      t.adam_m = Mat::Zero(t.value.rows(), t.value.cols());
      t.adam_v = Mat::Zero(t.value.rows(), t.value.cols());
      r.values(t.adam_m);
      r.values(t.adam_v);
    }
  }
  if (r.pos != bytes.size()) throw std::runtime_error("trailing bytes in parameter file");
  return p;
}

void ParamStore::save(const std::string& path, bool with_moments) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  const std::string s = serialize(with_moments);
  f.write(s.data(), static_cast<std::streamsize>(s.size()));
  if (!f) throw std::runtime_error("write failed: " + path);
}

ParamStore ParamStore::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return deserialize(ss.str());
}

std::uint64_t ParamStore::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xff;
      h *= 1099511628211ULL;
    }
  };
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    for (char c : names_[i]) mix(static_cast<unsigned char>(c));
    for (std::size_t d : tensors_[i].shape) mix(d);
    const Mat& m = tensors_[i].value;
    for (Eigen::Index k = 0; k < m.size(); ++k) mix(std::bit_cast<std::uint64_t>(m.data()[k]));
  }
  return h;
}

void Adam::step(ParamStore& params) const {
  ++params.step;
  const double t = static_cast<double>(params.step);
  const double c1 = 1.0 - std::pow(beta1, t);
  const double c2 = 1.0 - std::pow(beta2, t);
  for (Tensor& p : params.tensors()) {
    if (p.adam_m.size() != p.value.size()) {
      p.adam_m = Mat::Zero(p.value.rows(), p.value.cols());
      p.adam_v = Mat::Zero(p.value.rows(), p.value.cols());
    }
    p.adam_m = beta1 * p.adam_m + (1.0 - beta1) * p.grad;
    p.adam_v = beta2 * p.adam_v + (1.0 - beta2) * p.grad.cwiseProduct(p.grad);
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      const double mh = p.adam_m.data()[i] / c1;
      const double vh = p.adam_v.data()[i] / c2;
      p.value.data()[i] -= lr * mh / (std::sqrt(vh) + eps);
    }
  }
}

// ---------------------------------------------------------------------- Tape

Tape::Id Tape::push(Mat v, std::function<void(Tape&, Node&)> back) {
  Node n;
  n.value = std::move(v);
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size() - 1);
}

Mat& Tape::g(Id id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() != n.value.size()) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

double Tape::scalar(Id id) const {
  const Mat& m = value(id);
  if (m.size() != 1) throw ShapeError("scalar(): node is not 1x1");
  return m(0, 0);
}

Tape::Id Tape::constant(Mat v) { return push(std::move(v), nullptr); }

Tape::Id Tape::param(Tensor& t) {
  const Id id = push(t.value, nullptr);
  nodes_.back().param = &t;
  return id;
}

Tape::Id Tape::matmul(Id a, Id b) {
  if (v(a).cols() != v(b).rows()) throw ShapeError("matmul: inner dimensions differ");
  return push(v(a) * v(b), [a, b](Tape& t, Node& n) {
    t.g(a).noalias() += n.grad * t.v(b).transpose();
    t.g(b).noalias() += t.v(a).transpose() * n.grad;
  });
}

Tape::Id Tape::add(Id a, Id b) {
  require_same(v(a), v(b), "add");
  return push(v(a) + v(b), [a, b](Tape& t, Node& n) {
    t.g(a) += n.grad;
    t.g(b) += n.grad;
  });
}

Tape::Id Tape::sub(Id a, Id b) {
  require_same(v(a), v(b), "sub");
  return push(v(a) - v(b), [a, b](Tape& t, Node& n) {
    t.g(a) += n.grad;
    t.g(b) -= n.grad;
  });
}

Tape::Id Tape::mul(Id a, Id b) {
  require_same(v(a), v(b), "mul");
  return push(v(a).cwiseProduct(v(b)), [a, b](Tape& t, Node& n) {
    t.g(a) += n.grad.cwiseProduct(t.v(b));
    t.g(b) += n.grad.cwiseProduct(t.v(a));
  });
}

Tape::Id Tape::scale(Id a, double s) {
  return push(v(a) * s, [a, s](Tape& t, Node& n) { t.g(a) += n.grad * s; });
}

Tape::Id Tape::add_scalar(Id a, double s) {
  return push(v(a).array() + s, [a](Tape& t, Node& n) { t.g(a) += n.grad; });
}

Tape::Id Tape::add_bias(Id a, Id bias) {
  if (v(bias).rows() != 1 || v(bias).cols() != v(a).cols()) throw ShapeError("add_bias: bias must be 1 x cols");
  Mat out = v(a);
  out.rowwise() += v(bias).row(0);
  return push(std::move(out), [a, bias](Tape& t, Node& n) {
    t.g(a) += n.grad;
    t.g(bias) += n.grad.colwise().sum();
  });
}

Tape::Id Tape::tanh(Id a) {
  Mat out = v(a).array().tanh();
  return push(std::move(out), [a](Tape& t, Node& n) {
    t.g(a).array() += n.grad.array() * (1.0 - n.value.array().square());
  });
}

Tape::Id Tape::relu(Id a) {
  Mat out = v(a).cwiseMax(0.0);
  return push(std::move(out), [a](Tape& t, Node& n) {
    t.g(a).array() += (t.v(a).array() > 0.0).select(n.grad.array(), 0.0);
  });
}

Tape::Id Tape::exp(Id a) {
  Mat out = v(a).array().exp();
  return push(std::move(out), [a](Tape& t, Node& n) { t.g(a).array() += n.grad.array() * n.value.array(); });
}

Tape::Id Tape::log(Id a) {
  Mat out = v(a).array().log();
  return push(std::move(out), [a](Tape& t, Node& n) { t.g(a).array() += n.grad.array() / t.v(a).array(); });
}

Tape::Id Tape::minimum(Id a, Id b) {
  require_same(v(a), v(b), "minimum");
  Mat out = v(a).cwiseMin(v(b));
  return push(std::move(out), [a, b](Tape& t, Node& n) {
    const auto pick_a = (t.v(a).array() <= t.v(b).array());
    t.g(a).array() += pick_a.select(n.grad.array(), 0.0);
    t.g(b).array() += pick_a.select(0.0, n.grad.array());
  });
}

Tape::Id Tape::clamp(Id a, double lo, double hi) {
  Mat out = v(a).cwiseMax(lo).cwiseMin(hi);
  return push(std::move(out), [a, lo, hi](Tape& t, Node& n) {
    const auto inside = (t.v(a).array() >= lo) && (t.v(a).array() <= hi);
    t.g(a).array() += inside.select(n.grad.array(), 0.0);
  });
}

Tape::Id Tape::clamp_min(Id a, const Mat& lo) {
  require_same(v(a), lo, "clamp_min");
  Mat out = v(a).cwiseMax(lo);
  Mat keep = (v(a).array() >= lo.array()).cast<double>();
  return push(std::move(out), [a, keep = std::move(keep)](Tape& t, Node& n) {
    t.g(a) += n.grad.cwiseProduct(keep);
  });
}

Tape::Id Tape::sum(Id a) {
  Mat out(1, 1);
  out(0, 0) = v(a).sum();
  return push(std::move(out), [a](Tape& t, Node& n) { t.g(a).array() += n.grad(0, 0); });
}

Tape::Id Tape::mean(Id a) {
  const double k = static_cast<double>(v(a).size());
  Mat out(1, 1);
  out(0, 0) = v(a).sum() / k;
  return push(std::move(out), [a, k](Tape& t, Node& n) { t.g(a).array() += n.grad(0, 0) / k; });
}

Tape::Id Tape::sum_cols(Id a) {
  Mat out = v(a).rowwise().sum();
  return push(std::move(out), [a](Tape& t, Node& n) { t.g(a).colwise() += n.grad.col(0); });
}

Tape::Id Tape::mean_rows(Id a) {
  const double k = static_cast<double>(v(a).rows());
  Mat out = v(a).colwise().sum() / k;
  return push(std::move(out), [a, k](Tape& t, Node& n) { t.g(a).rowwise() += n.grad.row(0) / k; });
}

Tape::Id Tape::block_mean_rows(Id a, int block) {
  const Mat& x = v(a);
  if (block <= 0 || x.rows() % block != 0) throw ShapeError("block_mean_rows: rows not divisible by block");
  const Eigen::Index nb = x.rows() / block;
  Mat out(nb, x.cols());
  for (Eigen::Index b = 0; b < nb; ++b) out.row(b) = x.middleRows(b * block, block).colwise().sum() / block;
  return push(std::move(out), [a, block, nb](Tape& t, Node& n) {
    Mat& ga = t.g(a);
    for (Eigen::Index b = 0; b < nb; ++b)
      ga.middleRows(b * block, block).rowwise() += n.grad.row(b) / static_cast<double>(block);
  });
}

Tape::Id Tape::reshape(Id a, int rows, int cols) {
  const Mat& x = v(a);
  if (static_cast<Eigen::Index>(rows) * cols != x.size()) throw ShapeError("reshape: size mismatch");
  Mat out = Eigen::Map<const Mat>(x.data(), rows, cols);
  const Eigen::Index r0 = x.rows(), c0 = x.cols();
  return push(std::move(out), [a, r0, c0](Tape& t, Node& n) {
    t.g(a) += Eigen::Map<const Mat>(n.grad.data(), r0, c0);
  });
}

Tape::Id Tape::transpose(Id a) {
  Mat out = v(a).transpose();
  return push(std::move(out), [a](Tape& t, Node& n) { t.g(a) += n.grad.transpose(); });
}

Tape::Id Tape::concat_cols(const std::vector<Id>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const Eigen::Index r = v(parts[0]).rows();
  Eigen::Index c = 0;
  for (Id p : parts) {
    if (v(p).rows() != r) throw ShapeError("concat_cols: row counts differ");
    c += v(p).cols();
  }
  Mat out(r, c);
  Eigen::Index off = 0;
  for (Id p : parts) {
    out.middleCols(off, v(p).cols()) = v(p);
    off += v(p).cols();
  }
  return push(std::move(out), [parts](Tape& t, Node& n) {
    Eigen::Index o = 0;
    for (Id p : parts) {
      const Eigen::Index w = t.v(p).cols();
      t.g(p) += n.grad.middleCols(o, w);
      o += w;
    }
  });
}

Tape::Id Tape::concat_rows(const std::vector<Id>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const Eigen::Index c = v(parts[0]).cols();
  Eigen::Index r = 0;
  for (Id p : parts) {
    if (v(p).cols() != c) throw ShapeError("concat_rows: column counts differ");
    r += v(p).rows();
  }
  Mat out(r, c);
  Eigen::Index off = 0;
  for (Id p : parts) {
    out.middleRows(off, v(p).rows()) = v(p);
    off += v(p).rows();
  }
  return push(std::move(out), [parts](Tape& t, Node& n) {
    Eigen::Index o = 0;
    for (Id p : parts) {
      const Eigen::Index h = t.v(p).rows();
      t.g(p) += n.grad.middleRows(o, h);
      o += h;
    }
  });
}

Tape::Id Tape::slice_cols(Id a, int c0, int n) {
  if (c0 < 0 || n < 0 || c0 + n > v(a).cols()) throw ShapeError("slice_cols: out of range");
  Mat out = v(a).middleCols(c0, n);
  return push(std::move(out), [a, c0, n](Tape& t, Node& nd) { t.g(a).middleCols(c0, n) += nd.grad; });
}

Tape::Id Tape::slice_rows(Id a, int r0, int n) {
  if (r0 < 0 || n < 0 || r0 + n > v(a).rows()) throw ShapeError("slice_rows: out of range");
  Mat out = v(a).middleRows(r0, n);
  return push(std::move(out), [a, r0, n](Tape& t, Node& nd) { t.g(a).middleRows(r0, n) += nd.grad; });
}

Tape::Id Tape::gather_rows(Id a, const std::vector<int>& rows) {
  const Mat& x = v(a);
  Mat out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= x.rows()) throw ShapeError("gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
  }
  return push(std::move(out), [a, rows](Tape& t, Node& n) {
    Mat& ga = t.g(a);
    for (std::size_t i = 0; i < rows.size(); ++i) ga.row(rows[i]) += n.grad.row(static_cast<Eigen::Index>(i));
  });
}

Tape::Id Tape::shift_rows(Id a, int block, int offset) {
  const Mat& x = v(a);
  if (block <= 0 || x.rows() % block != 0) throw ShapeError("shift_rows: rows not divisible by block");
  Mat out = Mat::Zero(x.rows(), x.cols());
  const Eigen::Index nb = x.rows() / block;
  for (Eigen::Index b = 0; b < nb; ++b)
    for (int r = 0; r < block; ++r) {
      const int src = r - offset;
      if (src >= 0 && src < block) out.row(b * block + r) = x.row(b * block + src);
    }
  return push(std::move(out), [a, block, offset, nb](Tape& t, Node& n) {
    Mat& ga = t.g(a);
    for (Eigen::Index b = 0; b < nb; ++b)
      for (int r = 0; r < block; ++r) {
        const int src = r - offset;
        if (src >= 0 && src < block) ga.row(b * block + src) += n.grad.row(b * block + r);
      }
  });
}

Tape::Id Tape::pick(Id a, const std::vector<int>& idx) {
  const Mat& x = v(a);
  if (static_cast<Eigen::Index>(idx.size()) != x.rows()) throw ShapeError("pick: one index per row");
  Mat out(x.rows(), 1);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    if (idx[r] < 0 || idx[r] >= x.cols()) throw ShapeError("pick: index out of range");
    out(r, 0) = x(r, idx[r]);
  }
  return push(std::move(out), [a, idx](Tape& t, Node& n) {
    Mat& ga = t.g(a);
    for (Eigen::Index r = 0; r < ga.rows(); ++r) ga(r, idx[r]) += n.grad(r, 0);
  });
}

Tape::Id Tape::masked_log_softmax(Id a, const Mat& mask) {
  const Mat& x = v(a);
  require_same(x, mask, "masked_log_softmax");
  Mat out = Mat::Zero(x.rows(), x.cols());
  Mat prob = Mat::Zero(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < x.cols(); ++c)
      if (mask(r, c) != 0.0) mx = std::max(mx, x(r, c));
    if (!std::isfinite(mx)) throw ShapeError("masked_log_softmax: row with no unmasked entry");
    double z = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c)
      if (mask(r, c) != 0.0) z += std::exp(x(r, c) - mx);
    const double lz = mx + std::log(z);
    for (Eigen::Index c = 0; c < x.cols(); ++c)
      if (mask(r, c) != 0.0) {
        out(r, c) = x(r, c) - lz;
        prob(r, c) = std::exp(out(r, c));
      }
  }
  return push(std::move(out), [a, prob = std::move(prob), mask](Tape& t, Node& n) {
    Mat gm = n.grad.cwiseProduct(mask);
    const Eigen::VectorXd s = gm.rowwise().sum();
    t.g(a) += gm - (prob.array().colwise() * s.array()).matrix();
  });
}

Tape::Id Tape::attention(Id q, Id k, Id vv, int block, double scale, const Mat* mask) {
  const Mat& Q = v(q);
  const Mat& K = v(k);
  const Mat& V = v(vv);
  if (block <= 0 || Q.rows() % block != 0 || K.rows() != Q.rows() || V.rows() != Q.rows() ||
      Q.cols() != K.cols())
    throw ShapeError("attention: inconsistent shapes");
  if (mask && (mask->rows() != Q.rows() || mask->cols() != block)) throw ShapeError("attention: mask shape");
  const Eigen::Index nb = Q.rows() / block;
  Mat P(Q.rows(), block);  // softmax weights before the multiplicative mask
  Mat out(Q.rows(), V.cols());
  for (Eigen::Index b = 0; b < nb; ++b) {
    const Eigen::Index r0 = b * block;
    Mat S = Q.middleRows(r0, block) * K.middleRows(r0, block).transpose() * scale;
    for (Eigen::Index r = 0; r < block; ++r) {
      if (mask) {
        // Softmax over the mask's support only.
        double mx = -std::numeric_limits<double>::infinity();
        for (Eigen::Index c = 0; c < block; ++c)
          if ((*mask)(r0 + r, c) != 0.0) mx = std::max(mx, S(r, c));
        if (!std::isfinite(mx)) throw ShapeError("attention: mask row has no support");
        for (Eigen::Index c = 0; c < block; ++c)
          S(r, c) = (*mask)(r0 + r, c) != 0.0 ? std::exp(S(r, c) - mx) : 0.0;
      } else {
        const double mx = S.row(r).maxCoeff();
        S.row(r) = (S.row(r).array() - mx).exp();
      }
      S.row(r) /= S.row(r).sum();
    }
    P.middleRows(r0, block) = S;
    if (mask) S = S.cwiseProduct(mask->middleRows(r0, block));
    out.middleRows(r0, block).noalias() = S * V.middleRows(r0, block);
  }
  Mat M = mask ? *mask : Mat();
  return push(std::move(out), [q, k, vv, block, scale, nb, P = std::move(P), M = std::move(M)](Tape& t, Node& n) {
    const Mat& Qv = t.v(q);
    const Mat& Kv = t.v(k);
    const Mat& Vv = t.v(vv);
    Mat& gq = t.g(q);
    Mat& gk = t.g(k);
    Mat& gv = t.g(vv);
    for (Eigen::Index b = 0; b < nb; ++b) {
      const Eigen::Index r0 = b * block;
      const Mat Pb = P.middleRows(r0, block);
      const Mat W = M.size() ? Mat(Pb.cwiseProduct(M.middleRows(r0, block))) : Pb;
      const auto dY = n.grad.middleRows(r0, block);
      gv.middleRows(r0, block).noalias() += W.transpose() * dY;
      Mat dP = dY * Vv.middleRows(r0, block).transpose();
      if (M.size()) dP = dP.cwiseProduct(M.middleRows(r0, block));
      const Eigen::VectorXd rs = dP.cwiseProduct(Pb).rowwise().sum();
      const Mat dS = (Pb.array() * (dP.array().colwise() - rs.array())).matrix();
      gq.middleRows(r0, block).noalias() += scale * dS * Kv.middleRows(r0, block);
      gk.middleRows(r0, block).noalias() += scale * dS.transpose() * Qv.middleRows(r0, block);
    }
  });
}

void Tape::backward(Id loss) {
  if (backward_done_) throw TapeError("backward called twice on the same tape");
  if (value(loss).size() != 1) throw ShapeError("backward: loss must be a scalar");
  backward_done_ = true;
  g(loss).setOnes();
  for (Id i = loss; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.grad.size() == 0) continue;
    if (n.back) n.back(*this, n);
    if (n.param) n.param->grad += n.grad;
  }
}

// -------------------------------------------------------------------- layers

void add_linear(ParamStore& p, const std::string& name, std::size_t in, std::size_t out, Rng& rng, bool bias) {
  const double s = std::sqrt(6.0 / static_cast<double>(in + out));
  p.add(name + ".w", {in, out}, s, rng);
  if (bias) p.add_zeros(name + ".b", {1, out});
}

Tape::Id linear(Tape& t, ParamStore& p, const std::string& name, Tape::Id x, bool bias) {
  Tape::Id y = t.matmul(x, t.param(p.get(name + ".w")));
  if (bias) y = t.add_bias(y, t.param(p.get(name + ".b")));
  return y;
}

void add_mha(ParamStore& p, const std::string& name, std::size_t d, Rng& rng) {
  for (const char* m : {".q", ".k", ".v", ".o"}) add_linear(p, name + m, d, d, rng, false);
}

Tape::Id mha(Tape& t, ParamStore& p, const std::string& name, Tape::Id x, int block, int heads) {
  return mha(t, p, name, x, x, block, heads);
}

Tape::Id mha(Tape& t, ParamStore& p, const std::string& name, Tape::Id q_in, Tape::Id kv_in, int block,
             int heads) {
  const int d = static_cast<int>(t.value(q_in).cols());
  if (heads <= 0 || d % heads != 0) throw ShapeError("mha: model dim not divisible by heads");
  const int dh = d / heads;
  const Tape::Id q = linear(t, p, name + ".q", q_in, false);
  const Tape::Id k = linear(t, p, name + ".k", kv_in, false);
  const Tape::Id v = linear(t, p, name + ".v", kv_in, false);
  std::vector<Tape::Id> outs;
  for (int h = 0; h < heads; ++h) {
    outs.push_back(t.attention(t.slice_cols(q, h * dh, dh), t.slice_cols(k, h * dh, dh),
                               t.slice_cols(v, h * dh, dh), block, 1.0 / std::sqrt(static_cast<double>(dh))));
  }
  const Tape::Id cat = heads == 1 ? outs[0] : t.concat_cols(outs);
  return linear(t, p, name + ".o", cat, false);
}

// ----------------------------------------------------------------- gradcheck

GradCheckResult gradcheck(ParamStore& params, const std::function<Tape::Id(Tape&)>& loss, double eps,
                          std::size_t max_per_tensor) {
  params.zero_grad();
  {
    Tape t;
    t.backward(loss(t));
  }
  auto eval = [&]() {
    Tape t;
    return t.scalar(loss(t));
  };
  GradCheckResult res;
  for (std::size_t ti = 0; ti < params.tensors().size(); ++ti) {
    Tensor& T = params.tensors()[ti];
    const std::size_t n = T.size();
    std::size_t stride = 1;
    if (max_per_tensor > 0 && n > max_per_tensor) stride = (n + max_per_tensor - 1) / max_per_tensor;
    for (std::size_t i = 0; i < n; i += stride) {
      double& w = T.value.data()[i];
      const double keep = w;
      w = keep + eps;
      const double up = eval();
      w = keep - eps;
      const double dn = eval();
      w = keep;
      const double num = (up - dn) / (2.0 * eps);
      const double ana = T.grad.data()[i];
      const double rel = std::abs(num - ana) / std::max({std::abs(num), std::abs(ana), 1e-6});
      ++res.checked;
      if (rel > res.max_rel_error) {
        res.max_rel_error = rel;
        res.worst = params.names()[ti] + "[" + std::to_string(i) + "]";
      }
    }
  }
  return res;
}

}  // namespace armd::ad
