#include <cmath>

#include "armd/autodiff.hpp"
#include "doctest.h"
#include "fd.hpp"

using namespace armd;
using ad::Mat;
using ad::Tape;

namespace {

Mat random_mat(Rng& rng, int r, int c, double s = 1.0) {
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-s, s);
  return m;
}

}  // namespace

TEST_CASE("attention on a single row returns the value row") {
  Tape t;
  Rng rng(1);
  auto q = t.constant(random_mat(rng, 1, 4)), k = t.constant(random_mat(rng, 1, 4)), v = t.constant(random_mat(rng, 1, 4));
  auto out = t.attention(q, k, v, 1, 0.5);
  CHECK((t.value(out) - t.value(v)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("identical keys give uniform weights") {
  Tape t;
  Rng rng(2);
  Mat K(3, 2);
  K << 1, 2, 1, 2, 1, 2;
  Mat V = random_mat(rng, 3, 2);
  auto out = t.attention(t.constant(random_mat(rng, 3, 2)), t.constant(K), t.constant(V), 3, 1.0);
  Mat mean = V.colwise().mean();
  for (int r = 0; r < 3; ++r) CHECK((t.value(out).row(r) - mean).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("two-head attention matches a scalar oracle") {
  Rng rng(3);
  ad::ParamStore p;
  ad::add_mha(p, "m", 4, rng);
  Mat x = random_mat(rng, 2, 4);
  Tape t;
  auto y = ad::mha(t, p, "m", t.constant(x), 2, 2);

  const Mat& Wq = p.get("m.q.w").value;
  const Mat& Wk = p.get("m.k.w").value;
  const Mat& Wv = p.get("m.v.w").value;
  const Mat& Wo = p.get("m.o.w").value;
  auto proj = [&](const Mat& W, int r, int c) {
    double s = 0;
    for (int j = 0; j < 4; ++j) s += x(r, j) * W(j, c);
    return s;
  };
  double cat[2][4];
  for (int h = 0; h < 2; ++h)
    for (int r = 0; r < 2; ++r) {
      double score[2];
      for (int s = 0; s < 2; ++s) {
        score[s] = 0;
        for (int c = 2 * h; c < 2 * h + 2; ++c) score[s] += proj(Wq, r, c) * proj(Wk, s, c);
        score[s] /= std::sqrt(2.0);
      }
      const double mx = std::max(score[0], score[1]);
      const double e0 = std::exp(score[0] - mx), e1 = std::exp(score[1] - mx);
      const double w0 = e0 / (e0 + e1), w1 = e1 / (e0 + e1);
      for (int c = 2 * h; c < 2 * h + 2; ++c) cat[r][c] = w0 * proj(Wv, 0, c) + w1 * proj(Wv, 1, c);
    }
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 4; ++c) {
      double o = 0;
      for (int j = 0; j < 4; ++j) o += cat[r][j] * Wo(j, c);
      CHECK(std::abs(t.value(y)(r, c) - o) < 1e-13);
    }
  CHECK_THROWS_AS(ad::mha(t, p, "m", t.constant(x), 2, 3), ad::ShapeError);
}

TEST_CASE("softmax rows sum to one") {
  Rng rng(4);
  Tape t;
  Mat a = random_mat(rng, 5, 7, 30.0);
  Mat mask = Mat::Ones(5, 7);
  mask(1, 3) = 0;
  mask(4, 0) = 0;
  auto lp = t.masked_log_softmax(t.constant(a), mask);
  for (int r = 0; r < 5; ++r) {
    double s = 0;
    for (int c = 0; c < 7; ++c) s += mask(r, c) ? std::exp(t.value(lp)(r, c)) : 0.0;
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("backward basics") {
  Rng rng(5);
  ad::ParamStore p;
  p.add("w", {3, 2}, 1.0, rng);
  p.zero_grad();
  {
    Tape t;
    auto loss = t.sum(t.param(p.get("w")));
    t.backward(loss);
    CHECK_THROWS_AS(t.backward(loss), ad::TapeError);
  }
  CHECK((p.get("w").grad.array() == 1.0).all());

  p.zero_grad();
  p.add("unused", {2, 2}, 1.0, rng);
  p.zero_grad();
  Tape t;
  t.backward(t.scale(t.sum(t.tanh(t.param(p.get("w")))), 0.0));
  CHECK((p.get("w").grad.array() == 0.0).all());
  CHECK((p.get("unused").grad.array() == 0.0).all());
}

TEST_CASE("finite differences: each op in isolation") {
  Rng rng(6);
  ad::ParamStore p;
  p.add("a", {4, 3}, 1.0, rng);
  p.add("b", {4, 3}, 1.0, rng);
  p.add("c", {3, 3}, 1.0, rng);
  p.add("bias", {1, 3}, 1.0, rng);
  Mat mask = Mat::Ones(4, 3);
  mask(0, 1) = 0;
  Mat lo = Mat::Constant(4, 3, 0.1);
  Mat amask = Mat::Ones(4, 2);
  amask(1, 0) = 0;
  auto A = [&](Tape& t) { return t.param(p.get("a")); };
  auto B = [&](Tape& t) { return t.param(p.get("b")); };
  std::vector<std::pair<const char*, std::function<Tape::Id(Tape&)>>> cases = {
      {"matmul", [&](Tape& t) { return t.sum(t.tanh(t.matmul(A(t), t.param(p.get("c"))))); }},
      {"add/sub/mul", [&](Tape& t) { return t.sum(t.mul(t.add(A(t), B(t)), t.sub(A(t), B(t)))); }},
      {"bias/relu", [&](Tape& t) { return t.sum(t.mul(t.relu(t.add_bias(A(t), t.param(p.get("bias")))), B(t))); }},
      {"exp/log", [&](Tape& t) { return t.mean(t.log(t.add_scalar(t.exp(A(t)), 1.0))); }},
      {"minimum/clamp", [&](Tape& t) { return t.sum(t.mul(t.minimum(A(t), t.clamp(B(t), -0.5, 0.5)), A(t))); }},
      {"clamp_min", [&](Tape& t) { return t.sum(t.mul(t.clamp_min(A(t), lo), B(t))); }},
      {"reductions", [&](Tape& t) {
         auto s = t.sum_cols(t.mul(A(t), B(t)));
         auto m = t.mean_rows(t.tanh(A(t)));
         auto bm = t.block_mean_rows(t.mul(A(t), A(t)), 2);
         return t.add(t.add(t.sum(t.mul(s, s)), t.sum(t.mul(m, m))), t.sum(t.tanh(bm)));
       }},
      {"reshape/transpose", [&](Tape& t) {
         auto r = t.reshape(A(t), 3, 4);
         return t.sum(t.tanh(t.matmul(r, t.transpose(t.reshape(B(t), 3, 4)))));
       }},
      {"slices/concat/gather", [&](Tape& t) {
         auto x = t.concat_cols({t.slice_cols(A(t), 1, 2), t.slice_cols(B(t), 0, 1)});
         auto y = t.concat_rows({t.slice_rows(x, 2, 2), t.gather_rows(x, {0, 0, 3})});
         return t.sum(t.mul(t.tanh(y), y));
       }},
      {"shift/pick", [&](Tape& t) {
         auto s = t.add(t.shift_rows(A(t), 2, 1), t.shift_rows(B(t), 2, -1));
         return t.sum(t.mul(t.pick(t.tanh(s), {0, 2, 1, 0}), t.pick(A(t), {1, 1, 2, 0})));
       }},
      {"log-softmax", [&](Tape& t) { return t.sum(t.mul(t.masked_log_softmax(t.scale(A(t), 2.0), mask), B(t))); }},
      {"attention", [&](Tape& t) {
         auto q = t.slice_cols(A(t), 0, 2), k = t.slice_cols(B(t), 1, 2), v = t.slice_cols(A(t), 1, 2);
         auto out = t.attention(q, k, v, 2, 0.7, &amask);
         return t.sum(t.mul(out, t.tanh(out)));
       }},
  };
  for (auto& [name, loss] : cases) {
    INFO(name);
    CHECK(fd::max_rel_error(p, loss) < 1e-4);
  }
}

TEST_CASE("finite differences: a random 3-layer net") {
  Rng rng(7);
  ad::ParamStore p;
  ad::add_linear(p, "l1", 5, 8, rng);
  ad::add_linear(p, "l2", 8, 8, rng);
  ad::add_linear(p, "l3", 8, 1, rng);
  for (auto& t : p.tensors())
    for (Eigen::Index i = 0; i < t.value.size(); ++i) t.value.data()[i] += 0.1 * rng.uniform(-1, 1);
  Mat x = random_mat(rng, 6, 5);
  auto loss = [&](Tape& t) {
    auto h = t.tanh(ad::linear(t, p, "l1", t.constant(x)));
    h = t.tanh(ad::linear(t, p, "l2", h));
    auto y = ad::linear(t, p, "l3", h);
    return t.mean(t.mul(y, y));
  };
  CHECK(fd::max_rel_error(p, loss) < 1e-4);
  CHECK(ad::gradcheck(p, loss).max_rel_error < 1e-4);
}

TEST_CASE("Adam") {
  Rng rng(8);
  ad::ParamStore p;
  p.add("w", {2, 2}, 1.0, rng);
  const Mat w0 = p.get("w").value;
  ad::Adam opt;
  p.zero_grad();
  opt.step(p);
  CHECK(p.get("w").value == w0);
  CHECK(p.step == 1);

  ad::ParamStore q;
  q.add("w", {1, 1}, 1.0, rng);
  const double before = q.get("w").value(0, 0);
  q.zero_grad();
  q.get("w").grad(0, 0) = 1.0;
  opt.step(q);
  CHECK(q.get("w").value(0, 0) - before == doctest::Approx(-0.005).epsilon(1e-6));

  auto run = [] {
    Rng r(9);
    ad::ParamStore s;
    s.add("w", {3, 1}, 1.0, r);
    ad::Adam a;
    for (int i = 0; i < 20; ++i) {
      s.zero_grad();
      Tape t;
      auto w = t.param(s.get("w"));
      t.backward(t.sum(t.mul(w, w)));
      a.step(s);
    }
    return s.get("w").value;
  };
  CHECK(run() == run());
}

TEST_CASE("parameter store serialization is bit exact") {
  Rng rng(10);
  ad::ParamStore p;
  p.add("a", {3, 4}, 1.0, rng);
  p.add("b.c", {1, 5}, 0.3, rng);
  p.init_scheme = "test";
  p.zero_grad();
  ad::Adam{}.step(p);
  auto q = ad::ParamStore::deserialize(p.serialize());
  CHECK(q.names() == p.names());
  CHECK(q.init_scheme == "test");
  CHECK(q.step == p.step);
  CHECK(q.hash() == p.hash());
  CHECK(q.serialize() == p.serialize());
  for (std::size_t i = 0; i < p.tensors().size(); ++i) {
    CHECK(q.tensors()[i].value == p.tensors()[i].value);
    CHECK(q.tensors()[i].adam_v == p.tensors()[i].adam_v);
  }
  CHECK_THROWS(ad::ParamStore::deserialize(p.serialize().substr(0, 20)));
  CHECK_THROWS(p.add("a", {1, 1}, 1.0, rng));
}
