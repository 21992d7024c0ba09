#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "armd/rng.hpp"

namespace armd::ad {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Dense tensor of rank <= 3, stored as a (product of leading dims) x (last dim)
// row-major matrix.
struct Tensor {
  std::vector<std::size_t> shape;
  Mat value;
  Mat grad;
  Mat adam_m;
  Mat adam_v;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  std::size_t size() const { return static_cast<std::size_t>(value.size()); }
};

class ParamStore {
 public:
  // Adds a tensor initialised uniformly in [-scale, scale].
  Tensor& add(const std::string& name, std::vector<std::size_t> shape, double scale, Rng& rng);
  Tensor& add_zeros(const std::string& name, std::vector<std::size_t> shape);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  const std::vector<std::string>& names() const { return names_; }
  std::vector<Tensor>& tensors() { return tensors_; }
  const std::vector<Tensor>& tensors() const { return tensors_; }
  std::size_t parameter_count() const;

  void zero_grad();
  void fill_zero();

  std::string init_scheme;
  std::uint64_t step = 0;

  std::string serialize(bool with_moments = true) const;
  static ParamStore deserialize(const std::string& bytes);
  void save(const std::string& path, bool with_moments = true) const;
  static ParamStore load(const std::string& path);
  // FNV-1a over names, shapes and values.
  std::uint64_t hash() const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
  std::map<std::string, std::size_t> index_;
};

struct Adam {
  double lr = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  void step(ParamStore& params) const;
};

// Reverse-mode tape. Node ids are indices in creation order.
class Tape {
 public:
  using Id = int;

  Id constant(Mat v);
  Id param(Tensor& t);

  const Mat& value(Id id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  double scalar(Id id) const;
  const Mat& grad(Id id) const { return nodes_[static_cast<std::size_t>(id)].grad; }

  Id matmul(Id a, Id b);
  Id add(Id a, Id b);
  Id sub(Id a, Id b);
  Id mul(Id a, Id b);
  Id scale(Id a, double s);
  Id add_scalar(Id a, double s);
  Id add_bias(Id a, Id bias);  // bias is 1 x cols, broadcast over rows
  Id tanh(Id a);
  Id relu(Id a);
  Id exp(Id a);
  Id log(Id a);
  Id minimum(Id a, Id b);
  Id clamp(Id a, double lo, double hi);
  Id clamp_min(Id a, const Mat& lo);  // elementwise lower bound

  Id sum(Id a);
  Id mean(Id a);
  Id sum_cols(Id a);        // n x c -> n x 1
  Id mean_rows(Id a);       // n x c -> 1 x c
  Id block_mean_rows(Id a, int block);  // (B*block) x c -> B x c

  Id reshape(Id a, int rows, int cols);
  Id transpose(Id a);
  Id concat_cols(const std::vector<Id>& parts);
  Id concat_rows(const std::vector<Id>& parts);
  Id slice_cols(Id a, int c0, int n);
  Id slice_rows(Id a, int r0, int n);
  Id gather_rows(Id a, const std::vector<int>& rows);
  // Row t of each length-`block` run takes row t - offset of the same run
  // (zero outside).
  Id shift_rows(Id a, int block, int offset);
  // out[r] = a[r, idx[r]], an n x 1 column.
  Id pick(Id a, const std::vector<int>& idx);

  // Row-wise log-softmax over entries with mask 1; masked entries get 0.
  Id masked_log_softmax(Id a, const Mat& mask);

  // Scaled dot-product attention applied independently to each run of
  // `block` rows: softmax(Q K^T * scale) V. With a mask ((B*block) x block)
  // the softmax runs over the mask's nonzero entries and its weights are then
  // multiplied by the mask.
  Id attention(Id q, Id k, Id v, int block, double scale, const Mat* mask = nullptr);

  void backward(Id loss);
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    Tensor* param = nullptr;
    std::function<void(Tape&, Node&)> back;
  };
  Id push(Mat v, std::function<void(Tape&, Node&)> back);
  Mat& g(Id id);
  const Mat& v(Id id) const { return nodes_[static_cast<std::size_t>(id)].value; }

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// Affine layer helper: x W + b with parameters "<name>.w" and "<name>.b".
Tape::Id linear(Tape& t, ParamStore& p, const std::string& name, Tape::Id x, bool bias = true);
void add_linear(ParamStore& p, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                bool bias = true);

// Multi-head self-attention over runs of `block` rows: per head
// softmax(Q_h K_h^T / sqrt(d_h)) V_h, heads concatenated and projected.
// Parameters "<name>.q/.k/.v/.o" (d x d, no bias).
Tape::Id mha(Tape& t, ParamStore& p, const std::string& name, Tape::Id x, int block, int heads);
Tape::Id mha(Tape& t, ParamStore& p, const std::string& name, Tape::Id q_in, Tape::Id kv_in, int block,
             int heads);
void add_mha(ParamStore& p, const std::string& name, std::size_t d, Rng& rng);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // parameter name and flat index
  std::size_t checked = 0;
};

// Central finite differences on every parameter entry (or an evenly spaced
// subset of at most `max_per_tensor` entries per tensor).
GradCheckResult gradcheck(ParamStore& params, const std::function<Tape::Id(Tape&)>& loss,
                          double eps = 1e-5, std::size_t max_per_tensor = 0);

}  // namespace armd::ad
