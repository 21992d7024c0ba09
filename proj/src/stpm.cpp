#include "armd/stpm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "armd/binio.hpp"
#include "armd/policies.hpp"
#include "armd/simulator.hpp"
#include "armd/trace_io.hpp"

namespace armd {

using ad::Mat;
using ad::ParamStore;
using ad::Tape;

Mat gcn_mask(const LineGraph& lg, int blocks) {
  const auto E = static_cast<Eigen::Index>(lg.size);
  Mat one(E, E);
  for (Eigen::Index r = 0; r < E; ++r)
    for (Eigen::Index c = 0; c < E; ++c)
      one(r, c) = lg.adj(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) / lg.degree[static_cast<std::size_t>(r)];
  Mat m(E * blocks, E);
  for (int b = 0; b < blocks; ++b) m.middleRows(b * E, E) = one;
  return m;
}

Tape::Id dynamic_gcn(Tape& t, ParamStore& p, const std::string& w_name, Tape::Id h, const Mat& mask, int block) {
  const double d = static_cast<double>(t.value(h).cols());
  const Tape::Id hw = t.matmul(h, t.param(p.get(w_name)));
  return t.relu(t.attention(h, h, hw, block, 1.0 / std::sqrt(d), &mask));
}

void add_temporal_attention(ParamStore& p, const std::string& prefix, std::size_t d, Rng& rng) {
  for (const char* m : {".q0", ".q1", ".q2", ".k0", ".k1", ".k2", ".v", ".o"})
    ad::add_linear(p, prefix + m, d, d, rng, false);
}

namespace {

// Width-3 convolution along each run of T rows with zero padding.
Tape::Id conv3(Tape& t, ParamStore& p, const std::string& name, Tape::Id z, int T) {
  const Tape::Id prev = ad::linear(t, p, name + "0", t.shift_rows(z, T, 1), false);
  const Tape::Id mid = ad::linear(t, p, name + "1", z, false);
  const Tape::Id next = ad::linear(t, p, name + "2", t.shift_rows(z, T, -1), false);
  return t.add(t.add(prev, mid), next);
}

}  // namespace

Tape::Id temporal_attention(Tape& t, ParamStore& p, const std::string& prefix, Tape::Id z, int T, int heads) {
  const int d = static_cast<int>(t.value(z).cols());
  if (heads <= 0 || d % heads != 0) throw ad::ShapeError("temporal_attention: model dim not divisible by heads");
  const int dh = d / heads;
  const Tape::Id q = conv3(t, p, prefix + ".q", z, T);
  const Tape::Id k = conv3(t, p, prefix + ".k", z, T);
  const Tape::Id v = ad::linear(t, p, prefix + ".v", z, false);
  std::vector<Tape::Id> outs;
  for (int h = 0; h < heads; ++h)
    outs.push_back(t.attention(t.slice_cols(q, h * dh, dh), t.slice_cols(k, h * dh, dh), t.slice_cols(v, h * dh, dh),
                               T, 1.0 / std::sqrt(static_cast<double>(dh))));
  return ad::linear(t, p, prefix + ".o", heads == 1 ? outs[0] : t.concat_cols(outs), false);
}

StpmModel::StpmModel(const RoadNetwork& net, StpmConfig cfg) : StpmModel(net, cfg, ParamStore{}) {
  Rng rng = Rng::stream(cfg_.seed, "stpm-init");
  const auto d = static_cast<std::size_t>(cfg_.d_model);
  params_.init_scheme = "glorot-uniform;zero-bias;embeddings-uniform-0.1";
  ad::add_linear(params_, "stpm.in", kStpmInputs, d, rng);
  params_.add("stpm.time", {static_cast<std::size_t>(cfg_.window), d}, 0.1, rng);
  params_.add("stpm.edge", {ff_.size(), d}, 0.1, rng);
  for (int l = 0; l < cfg_.layers; ++l) {
    const std::string pre = "stpm.l" + std::to_string(l);
    params_.add(pre + ".gcn", {d, d}, std::sqrt(6.0 / (2.0 * static_cast<double>(d))), rng);
    add_temporal_attention(params_, pre + ".ta", d, rng);
  }
  ad::add_linear(params_, "stpm.head", d, static_cast<std::size_t>(cfg_.horizon), rng);
  // Start from the base forecast.
  params_.get("stpm.head.w").value *= 0.01;
}

StpmModel::StpmModel(const RoadNetwork& net, StpmConfig cfg, ParamStore params)
    : cfg_(cfg), params_(std::move(params)) {
  for (const Edge& e : net.edges()) ff_.push_back(e.free_flow_min);
  ff_scale_ = *std::max_element(ff_.begin(), ff_.end());
  mask_ = gcn_mask(line_graph_adjacency(net), cfg_.window);
  const int T = cfg_.window;
  const int E = static_cast<int>(ff_.size());
  to_edge_major_.resize(static_cast<std::size_t>(T * E));
  to_time_major_.resize(static_cast<std::size_t>(T * E));
  for (int e = 0; e < E; ++e)
    for (int s = 0; s < T; ++s) {
      to_edge_major_[static_cast<std::size_t>(e * T + s)] = s * E + e;
      to_time_major_[static_cast<std::size_t>(s * E + e)] = e * T + s;
    }
}

Mat cap_unreachable(const Mat& m) {
  double mx = 0.0;
  bool any_inf = false;
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    if (is_reachable(m.data()[i]))
      mx = std::max(mx, m.data()[i]);
    else
      any_inf = true;
  }
  if (!any_inf) return m;
  Mat out = m;
  for (Eigen::Index i = 0; i < out.size(); ++i)
    if (!is_reachable(out.data()[i])) out.data()[i] = 3.0 * mx;
  return out;
}

Tape::Id StpmModel::forward(Tape& t, const Mat& window_in, double end_min) {
  const int T = cfg_.window;
  const int E = static_cast<int>(ff_.size());
  if (window_in.rows() != T || window_in.cols() != E) throw ad::ShapeError("stpm: window must be T x E");
  const Mat window = cap_unreachable(window_in);
  Mat x(static_cast<Eigen::Index>(T) * E, kStpmInputs);
  std::vector<int> time_idx, edge_idx;
  for (int s = 0; s < T; ++s)
    for (int e = 0; e < E; ++e) {
      const double ff = ff_[static_cast<std::size_t>(e)];
      x.row(s * E + e) << window(s, e) / ff - 1.0, ff / ff_scale_, end_min / cfg_.horizon_min;
      time_idx.push_back(s);
      edge_idx.push_back(e);
    }
  Tape::Id h = ad::linear(t, params_, "stpm.in", t.constant(std::move(x)));
  h = t.add(h, t.gather_rows(t.param(params_.get("stpm.time")), time_idx));
  h = t.add(h, t.gather_rows(t.param(params_.get("stpm.edge")), edge_idx));
  for (int l = 0; l < cfg_.layers; ++l) {
    const std::string pre = "stpm.l" + std::to_string(l);
    h = t.add(h, dynamic_gcn(t, params_, pre + ".gcn", h, mask_, E));
    Tape::Id z = t.gather_rows(h, to_edge_major_);
    z = t.add(z, temporal_attention(t, params_, pre + ".ta", z, T, cfg_.heads));
    h = t.gather_rows(z, to_time_major_);
  }
  const Tape::Id last = t.slice_rows(h, (T - 1) * E, E);
  const Tape::Id out = ad::linear(t, params_, "stpm.head", last);  // E x horizon
  const int H = cfg_.horizon;
  Mat ff(E, H), base(E, H);
  for (int e = 0; e < E; ++e) {
    const double f = ff_[static_cast<std::size_t>(e)];
    ff.row(e).setConstant(f);
    base.row(e).setConstant(cfg_.residual ? window(T - 1, e) : f);
  }
  const Tape::Id pred = t.add(t.mul(out, t.constant(ff)), t.constant(std::move(base)));
  return t.transpose(t.clamp_min(pred, ff));
}

Mat StpmModel::predict(const Mat& window, double end_min) {
  Tape t;
  return t.value(forward(t, window, end_min));
}

Tape::Id StpmModel::loss(Tape& t, const Mat& window, double end_min, const Mat& target) {
  const Tape::Id pred = forward(t, window, end_min);
  const Tape::Id d = t.sub(pred, t.constant(cap_unreachable(target)));
  return t.mean(t.mul(d, d));
}

// ------------------------------------------------------------------ dataset

std::size_t TrafficDataset::windows_per_field(std::size_t f) const {
  const auto rows = static_cast<std::size_t>(fields.at(f).rows());
  const auto span = static_cast<std::size_t>(window + horizon);
  return rows >= span ? rows - span + 1 : 0;
}

std::size_t TrafficDataset::window_count() const {
  std::size_t n = 0;
  for (std::size_t f = 0; f < fields.size(); ++f) n += windows_per_field(f);
  return n;
}

Mat TrafficDataset::input(std::size_t f, std::size_t w) const {
  return fields.at(f).middleRows(static_cast<Eigen::Index>(w), window);
}

Mat TrafficDataset::target(std::size_t f, std::size_t w) const {
  return fields.at(f).middleRows(static_cast<Eigen::Index>(w) + window, horizon);
}

namespace {
constexpr char kDataMagic[8] = {'A', 'R', 'M', 'D', 'D', 'S', '0', '1'};
}

void TrafficDataset::save(const std::string& path) const {
  using namespace binio;
  std::string out(kDataMagic, kDataMagic + 8);
  put_u64(out, window_count());
  put_u32(out, static_cast<std::uint32_t>(window));
  put_u32(out, static_cast<std::uint32_t>(edges));
  put_u32(out, static_cast<std::uint32_t>(horizon));
  put_f64(out, step_min);
  put_u32(out, static_cast<std::uint32_t>(fields.size()));
  for (const Mat& f : fields) {
    put_u32(out, static_cast<std::uint32_t>(f.rows()));
    for (Eigen::Index i = 0; i < f.size(); ++i) put_f64(out, f.data()[i]);
  }
  write_file(path, out);
}

TrafficDataset TrafficDataset::load(const std::string& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < 8 || !std::equal(kDataMagic, kDataMagic + 8, bytes.begin()))
    throw std::runtime_error("not a traffic dataset (bad magic)");
  binio::Reader rd{bytes, 8};
  TrafficDataset d;
  const std::uint64_t n_windows = rd.u64();
  d.window = static_cast<int>(rd.u32());
  d.edges = rd.u32();
  d.horizon = static_cast<int>(rd.u32());
  d.step_min = rd.f64();
  const std::uint32_t nf = rd.u32();
  for (std::uint32_t f = 0; f < nf; ++f) {
    const std::uint32_t rows = rd.u32();
    Mat m(rows, static_cast<Eigen::Index>(d.edges));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rd.f64();
    d.fields.push_back(std::move(m));
  }
  if (!rd.at_end() || d.window_count() != n_windows) throw std::runtime_error("traffic dataset header mismatch");
  return d;
}

TrafficDataset generate_training_data(const Scenario& scenario, const std::vector<std::uint64_t>& seeds, int window,
                                      int horizon) {
  Scenario s = scenario;
  s.fleet.trucks = 0;
  TrafficDataset d;
  d.window = window;
  d.horizon = horizon;
  d.edges = s.network.edge_count();
  d.step_min = s.step_min;
  SimOptions opt;
  opt.record_trucks = false;
  opt.routing = RoutingMode::Static;
  for (std::uint64_t seed : seeds) {
    GreedyPolicy none;
    const EpisodeResult r = run_episode(s, none, seed, opt);
    Mat m(static_cast<Eigen::Index>(r.field.steps()), static_cast<Eigen::Index>(d.edges));
    for (std::size_t st = 0; st < r.field.steps(); ++st)
      for (std::size_t e = 0; e < d.edges; ++e)
        m(static_cast<Eigen::Index>(st), static_cast<Eigen::Index>(e)) = r.field.at(st, static_cast<EdgeId>(e));
    d.fields.push_back(std::move(m));
  }
  return d;
}

DatasetSplit split_by_scenario(const TrafficDataset& d, double train_share) {
  DatasetSplit s;
  const auto n = d.fields.size();
  auto n_train = static_cast<std::size_t>(std::llround(train_share * static_cast<double>(n)));
  n_train = std::min(n_train, n);
  for (std::size_t i = 0; i < n; ++i) (i < n_train ? s.train : s.test).push_back(i);
  return s;
}

// ----------------------------------------------------------------- training

namespace {

double window_mse(const Mat& pred, const Mat& target) {
  const Mat tgt = cap_unreachable(target);
  return (pred - tgt).squaredNorm() / static_cast<double>(pred.size());
}

Mat persistence(const Mat& window, int horizon) {
  const Mat w = cap_unreachable(window);
  Mat out(horizon, w.cols());
  for (int h = 0; h < horizon; ++h) out.row(h) = w.row(w.rows() - 1);
  return out;
}

}  // namespace

ForecastSkill evaluate_forecast(StpmModel& model, const TrafficDataset& data, const std::vector<std::size_t>& fields,
                                int stride) {
  ForecastSkill s;
  stride = std::max(stride, 1);
  for (std::size_t f : fields)
    for (std::size_t w = 0; w < data.windows_per_field(f); w += static_cast<std::size_t>(stride)) {
      const Mat in = data.input(f, w);
      const Mat tgt = data.target(f, w);
      s.model_mse += window_mse(model.predict(in, data.end_min(w)), tgt);
      s.persistence_mse += window_mse(persistence(in, data.horizon), tgt);
      ++s.windows;
    }
  if (s.windows > 0) {
    s.model_mse /= static_cast<double>(s.windows);
    s.persistence_mse /= static_cast<double>(s.windows);
  }
  return s;
}

StpmTrainResult train_stpm(StpmModel& model, const TrafficDataset& data, const std::vector<std::size_t>& fields,
                           const StpmTrainOptions& opt, const std::function<void(const StpmTrainLogRow&)>& on_eval) {
  if (fields.empty() || data.window_count() == 0) throw std::invalid_argument("train_stpm: empty dataset");
  std::vector<std::size_t> train(fields.begin(), fields.end());
  std::vector<std::size_t> val;
  const auto nv = static_cast<std::size_t>(std::max(opt.validation_fields, 0));
  if (train.size() > nv && nv > 0) {
    val.assign(train.end() - static_cast<std::ptrdiff_t>(nv), train.end());
    train.resize(train.size() - nv);
  } else {
    val = train;
  }
  std::vector<std::pair<std::size_t, std::size_t>> items;
  for (std::size_t f : train)
    for (std::size_t w = 0; w < data.windows_per_field(f); w += static_cast<std::size_t>(std::max(opt.window_stride, 1)))
      items.emplace_back(f, w);

  StpmTrainResult res;
  auto validate = [&]() { return evaluate_forecast(model, data, val, opt.validation_stride).model_mse; };
  res.best_validation = validate();
  ParamStore best = model.params();
  const ad::Adam adam{model.config().lr};
  Rng rng = Rng::stream(opt.seed, "stpm-shuffle");
  int step = 0;
  for (int ep = 0; ep < opt.epochs; ++ep) {
    for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[rng.index(i)]);
    const auto B = static_cast<std::size_t>(std::max(opt.batch, 1));
    for (std::size_t b0 = 0; b0 < items.size(); b0 += B) {
      const std::size_t b1 = std::min(items.size(), b0 + B);
      model.params().zero_grad();
      Tape t;
      std::vector<Tape::Id> losses;
      for (std::size_t i = b0; i < b1; ++i) {
        const auto [f, w] = items[i];
        losses.push_back(model.loss(t, data.input(f, w), data.end_min(w), data.target(f, w)));
      }
      const Tape::Id loss = t.scale(t.sum(t.concat_rows(losses)), 1.0 / static_cast<double>(b1 - b0));
      const double lv = t.scalar(loss);
      t.backward(loss);
      adam.step(model.params());
      ++step;
      if (step % std::max(opt.eval_every, 1) == 0) {
        StpmTrainLogRow row{step, lv, validate()};
        if (row.validation_mse < res.best_validation) {
          res.best_validation = row.validation_mse;
          best = model.params();
        }
        res.log.push_back(row);
        if (on_eval) on_eval(row);
      }
    }
  }
  const double final_val = validate();
  if (final_val < res.best_validation) {
    res.best_validation = final_val;
    best = model.params();
  }
  model.params() = std::move(best);
  return res;
}

Forecast StpmForecaster::forecast(const TravelTimeField& history, std::span<const double> current, double now_min,
                                  double step_min) const {
  const int T = model_.config().window;
  const auto E = static_cast<Eigen::Index>(current.size());
  if (static_cast<std::size_t>(E) != model_.edges()) throw NetworkError("forecaster: edge count mismatch");
  Mat w(T, E);
  const std::size_t have = history.steps();
  for (int s = 0; s < T; ++s) {
    const long src = static_cast<long>(have) - T + s;
    for (Eigen::Index e = 0; e < E; ++e) {
      if (have == 0)
        w(s, e) = current[static_cast<std::size_t>(e)];
      else
        w(s, e) = history.at(static_cast<std::size_t>(std::max(src, 0L)), static_cast<EdgeId>(e));
    }
  }
  const Mat pred = model_.predict(w, now_min);
  Forecast f;
  f.rows = static_cast<std::size_t>(pred.rows());
  f.edges = static_cast<std::size_t>(E);
  f.start_min = now_min;
  f.step_min = step_min;
  f.values.resize(f.rows * f.edges);
  for (std::size_t r = 0; r < f.rows; ++r)
    for (std::size_t e = 0; e < f.edges; ++e)
      f.values[r * f.edges + e] = is_reachable(current[e]) ? pred(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(e))
                                                           : kUnreachable;
  return f;
}

}  // namespace armd
