#include <cmath>
#include <cstdio>
#include <filesystem>

#include "armd/stpm.hpp"
#include "doctest.h"
#include "fd.hpp"
#include "toy.hpp"

using namespace armd;
using ad::Mat;
using ad::Tape;

namespace {

// 0 -> 1 -> 2 -> 3 path.
RoadNetwork chain3() {
  return toy::net(4, {toy::edge(0, 0, 1, 4), toy::edge(1, 1, 2, 6), toy::edge(2, 2, 3, 5)});
}

Mat softmax_rows(Mat s) {
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    s.row(r) = (s.row(r).array() - s.row(r).maxCoeff()).exp();
    s.row(r) /= s.row(r).sum();
  }
  return s;
}

StpmConfig tiny_cfg() {
  StpmConfig c;
  c.d_model = 4;
  c.heads = 2;
  c.window = 4;
  c.horizon = 3;
  return c;
}

Mat congested_window(const RoadNetwork& net, int T, Rng& rng) {
  Mat w(T, Eigen::Index(net.edge_count()));
  for (int s = 0; s < T; ++s)
    for (std::size_t e = 0; e < net.edge_count(); ++e)
      w(s, Eigen::Index(e)) = net.edges()[e].free_flow_min * (1.3 + rng.uniform());
  return w;
}

}  // namespace

TEST_CASE("line-graph mask") {
  auto lg = line_graph_adjacency(chain3());
  Mat m = gcn_mask(lg, 2);
  CHECK(m.rows() == 6);
  CHECK(m(0, 0) == 0.5);
  CHECK(m(0, 1) == 0.5);
  CHECK(m(0, 2) == 0.0);
  CHECK(m(1, 1) == 0.5);
  CHECK(m(2, 2) == 1.0);
  CHECK(m.bottomRows(3) == m.topRows(3));
}

TEST_CASE("dynamic GCN") {
  Rng rng(21);
  ad::ParamStore p;
  p.add("w", {4, 4}, 0.7, rng);

  SUBCASE("single edge") {
    Mat h = Mat::Random(1, 4);
    Tape t;
    Mat out = t.value(dynamic_gcn(t, p, "w", t.constant(h), Mat::Ones(1, 1), 1));
    Mat hand = (h * p.get("w").value).cwiseMax(0.0);
    CHECK((out - hand).cwiseAbs().maxCoeff() < 1e-15);
  }

  SUBCASE("three edges against a dense oracle") {
    auto lg = line_graph_adjacency(chain3());
    Mat mask = gcn_mask(lg, 1);
    Mat h = Mat::Random(3, 4);
    Tape t;
    Mat out = t.value(dynamic_gcn(t, p, "w", t.constant(h), mask, 3));
    Mat scores = h * h.transpose() / 2.0;
    for (Eigen::Index i = 0; i < scores.size(); ++i)
      if (mask.data()[i] == 0.0) scores.data()[i] = -1e300;
    Mat att = softmax_rows(scores);
    CHECK((att.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
    Mat hand = (mask.cwiseProduct(att) * h * p.get("w").value).cwiseMax(0.0);
    CHECK((out - hand).cwiseAbs().maxCoeff() < 1e-14);
  }

  SUBCASE("non-adjacent edges do not mix") {
    // Edge 2 (2->3) only sees itself; edge 0 never sees edge 2.
    auto lg = line_graph_adjacency(chain3());
    Mat mask = gcn_mask(lg, 1);
    Mat h = Mat::Random(3, 4);
    Tape t1;
    Mat a = t1.value(dynamic_gcn(t1, p, "w", t1.constant(h), mask, 3));
    h.row(2) *= -3.0;
    Tape t2;
    Mat b = t2.value(dynamic_gcn(t2, p, "w", t2.constant(h), mask, 3));
    CHECK(a.row(0) == b.row(0));
  }
}

TEST_CASE("temporal attention") {
  Rng rng(22);
  ad::ParamStore p;
  add_temporal_attention(p, "ta", 4, rng);
  auto vo = [&](const Mat& z) { return Mat(z * p.get("ta.v.w").value * p.get("ta.o.w").value); };

  Mat one = Mat::Random(1, 4);
  Tape t;
  CHECK((t.value(temporal_attention(t, p, "ta", t.constant(one), 1, 2)) - vo(one)).cwiseAbs().maxCoeff() < 1e-14);

  Mat flat(5, 4);
  for (int r = 0; r < 5; ++r) flat.row(r) = one.row(0);
  Tape t2;
  Mat out = t2.value(temporal_attention(t2, p, "ta", t2.constant(flat), 5, 2));
  for (int r = 0; r < 5; ++r) CHECK((out.row(r) - vo(one)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("forecast base and clamp") {
  auto net = chain3();
  Rng rng(23);
  auto cfg = tiny_cfg();
  cfg.residual = false;
  StpmModel m(net, cfg);
  m.params().get("stpm.head.w").value.setZero();
  m.params().get("stpm.head.b").value.setZero();
  Mat w = congested_window(net, 4, rng);
  Mat f = m.predict(w, 100);
  REQUIRE(f.rows() == 3);
  for (int h = 0; h < 3; ++h)
    for (int e = 0; e < 3; ++e) CHECK(f(h, e) == net.edges()[std::size_t(e)].free_flow_min);

  cfg.residual = true;
  StpmModel pers(net, cfg, m.params());
  Mat g = pers.predict(w, 100);
  for (int h = 0; h < 3; ++h) CHECK(g.row(h) == w.row(3));

  pers.params().get("stpm.head.b").value.setConstant(-50.0);
  Mat low = pers.predict(w, 100);
  for (int h = 0; h < 3; ++h)
    for (int e = 0; e < 3; ++e) CHECK(low(h, e) == net.edges()[std::size_t(e)].free_flow_min);

  StpmModel fresh(net, tiny_cfg());
  for (int trial = 0; trial < 20; ++trial) {
    Mat x = congested_window(net, 4, rng) * 0.5;
    Mat y = fresh.predict(x, 60.0 * trial);
    for (int e = 0; e < 3; ++e) CHECK(y.col(e).minCoeff() >= net.edges()[std::size_t(e)].free_flow_min);
  }
}

TEST_CASE("unreachable inputs are capped") {
  Mat m(2, 2);
  m << 1, kUnreachable, 4, 2;
  Mat c = cap_unreachable(m);
  CHECK(c(0, 1) == 12.0);
  CHECK(c(1, 0) == 4.0);
}

TEST_CASE("STPM loss gradient") {
  auto net = chain3();
  Rng rng(24);
  StpmModel m(net, tiny_cfg());
  for (auto& t : m.params().tensors()) t.value = Mat::Random(t.value.rows(), t.value.cols()) * 0.4;
  Mat w = congested_window(net, 4, rng);
  Mat target = congested_window(net, 3, rng);
  CHECK(fd::max_rel_error(m.params(), [&](Tape& t) { return m.loss(t, w, 35.0, target); }) < 1e-4);
}

TEST_CASE("training data") {
  Scenario s = default_scenario();
  auto d = generate_training_data(s, {1});
  CHECK(d.window_count() == 553);
  auto again = generate_training_data(s, {1});
  CHECK(again.fields[0] == d.fields[0]);

  TrafficDataset ten;
  ten.window = 2;
  ten.horizon = 1;
  ten.edges = 1;
  for (int i = 0; i < 10; ++i) ten.fields.push_back(Mat::Constant(5, 1, i));
  auto split = split_by_scenario(ten);
  CHECK(split.train.size() == 8);
  CHECK(split.test.size() == 2);
  for (auto a : split.train)
    for (auto b : split.test) CHECK(a != b);
  CHECK(ten.window_count() == 30);
  CHECK(ten.target(3, 1)(0, 0) == 3.0);

  const auto path = (std::filesystem::temp_directory_path() / "armd_test_dataset.bin").string();
  d.save(path);
  auto back = TrafficDataset::load(path);
  std::remove(path.c_str());
  CHECK(back.window_count() == 553);
  CHECK(back.fields[0] == d.fields[0]);
  CHECK(back.step_min == d.step_min);
}

TEST_CASE("constant traffic is learnable") {
  auto net = chain3();
  auto cfg = tiny_cfg();
  cfg.d_model = 8;
  cfg.residual = false;
  cfg.lr = 0.01;
  TrafficDataset d;
  d.window = cfg.window;
  d.horizon = cfg.horizon;
  d.edges = 3;
  const double level[4] = {1.2, 1.6, 2.0, 1.4};
  for (double l : level) {
    Mat f(20, 3);
    for (int e = 0; e < 3; ++e) f.col(e).setConstant(l * net.edges()[std::size_t(e)].free_flow_min);
    d.fields.push_back(f);
  }
  double mean = 0, var = 0, n = 0;
  for (const auto& f : d.fields)
    for (Eigen::Index i = 0; i < f.size(); ++i) {
      mean += f.data()[i];
      n += 1;
    }
  mean /= n;
  for (const auto& f : d.fields)
    for (Eigen::Index i = 0; i < f.size(); ++i) var += (f.data()[i] - mean) * (f.data()[i] - mean) / n;

  StpmModel m(net, cfg);
  std::vector<std::size_t> fields{0, 1, 2, 3};
  const double before = evaluate_forecast(m, d, fields).model_mse;
  StpmTrainOptions zero;
  zero.epochs = 0;
  const auto h0 = m.params().hash();
  train_stpm(m, d, fields, zero);
  CHECK(m.params().hash() == h0);

  StpmTrainOptions opt;
  opt.epochs = 60;
  opt.validation_fields = 0;
  opt.validation_stride = 1;
  train_stpm(m, d, fields, opt);
  const double after = evaluate_forecast(m, d, fields).model_mse;
  MESSAGE("constant-traffic mse " << before << " -> " << after << ", variance " << var);
  CHECK(after < before);
  CHECK(after < 1e-2 * var);
}
