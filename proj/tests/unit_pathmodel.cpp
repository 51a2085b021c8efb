#include "riverpath/pathmodel.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "test_util.hpp"

using namespace rp;

namespace {

Mat randn(Rng& rng, int n, int p) {
  Mat m(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) m(i, j) = rng.normal();
  return m;
}

PathSpec chain_spec(std::initializer_list<std::string> ids) {
  PathSpec s;
  std::string prev;
  for (const auto& id : ids) {
    s.blocks.push_back(id);
    if (!prev.empty()) s.edges.emplace_back(prev, id);
    prev = id;
  }
  return s;
}

BlockData make_block(const std::string& id, const Mat& X) {
  BlockData b;
  b.id = id;
  b.X = X;
  for (int j = 0; j < X.cols(); ++j)
    b.var_names.push_back(id + "_v" + std::to_string(j + 1));
  return b;
}

}  // namespace

TEST_SUITE_BEGIN("pathmodel");

TEST_CASE("full-rank projection reproduces least squares") {
  Rng rng(71);
  Mat X = randn(rng, 40, 6);
  Mat Btrue = randn(rng, 6, 2);
  Mat Y = X * Btrue + 0.01 * randn(rng, 40, 2);
  auto m = simpls_fit(X, Y, 6);
  CHECK(m.n_lv == 6);

  Mat Xc = X.rowwise() - X.colwise().mean();
  Mat Yc = Y.rowwise() - Y.colwise().mean();
  Mat ols = (Xc.transpose() * Xc).ldlt().solve(Xc.transpose() * Yc);
  CHECK((m.coef - ols).cwiseAbs().maxCoeff() < 1e-8);
  Mat pred = simpls_predict(m, X);
  Mat ols_pred = (Xc * ols).rowwise() + Y.colwise().mean();
  CHECK((pred - ols_pred).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("one direction suffices for an orthogonal single-factor relation") {
  Rng rng(73);
  Mat G = randn(rng, 30, 4);
  G.rowwise() -= G.colwise().mean();  // orthonormalize inside the centered space
  Eigen::HouseholderQR<Mat> qr(G);
  Mat R = qr.matrixQR().topRows(4).triangularView<Eigen::Upper>();
  Mat X = 3.0 * G * R.inverse();  // zero column means survive the combination
  Vec w(4);
  w << 1.0, -2.0, 0.5, 1.5;
  Mat Y = X * w;
  auto m = simpls_fit(X, Y, 1);
  CHECK((simpls_predict(m, X) - Y).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("scores are orthonormal and reproducible") {
  Rng rng(79);
  Mat X = randn(rng, 25, 5);
  Mat Y = randn(rng, 25, 3);
  auto m = simpls_fit(X, Y, 4);
  Mat TtT = m.T.transpose() * m.T;
  CHECK((TtT - Mat::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((simpls_scores(m, X) - m.T).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("degenerate targets yield a mean-only model") {
  Rng rng(83);
  Mat X = randn(rng, 20, 3);
  Mat Y = Mat::Constant(20, 2, 4.25);
  auto m = simpls_fit(X, Y, 3);
  CHECK(m.n_lv == 0);
  Mat pred = simpls_predict(m, X);
  CHECK((pred.array() - 4.25).abs().maxCoeff() < 1e-12);
}

TEST_CASE("double cross-validation finds the latent dimension") {
  Rng rng(89);
  const int n = 60;
  Mat T = randn(rng, n, 2);
  Mat Px = randn(rng, 8, 2);
  Mat Py = randn(rng, 3, 2);
  Mat X = T * Px.transpose() + 0.02 * randn(rng, n, 8);
  Mat Y = T * Py.transpose() + 0.02 * randn(rng, n, 3);
  CvParams cv;
  cv.max_lv = 6;
  cv.seed = 5;
  auto choice = select_lv_doublecv(X, Y, cv);
  CHECK(choice.n_lv == 2);
  CHECK_FALSE(choice.degraded);
  CHECK(choice.per_fold.size() == 5);

  auto again = select_lv_doublecv(X, Y, cv);
  CHECK(again.n_lv == choice.n_lv);
  CHECK(again.per_fold == choice.per_fold);

  Mat Xs = X.topRows(8), Ys = Y.topRows(8);
  auto small = select_lv_doublecv(Xs, Ys, cv);
  CHECK(small.degraded);
}

TEST_CASE("block scaling gives unit block variance and inverts exactly") {
  Rng rng(97);
  Mat X = randn(rng, 30, 5);
  X.col(2) *= 40.0;
  X.col(3).array() += 100.0;
  auto s = fit_block_scaling(X);
  Mat Z = s.apply(X);
  CHECK(Z.colwise().mean().cwiseAbs().maxCoeff() < 1e-12);
  CHECK(Z.squaredNorm() / 29.0 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK((s.invert(Z) - X).cwiseAbs().maxCoeff() < 1e-9);

  Mat flat = X;
  flat.col(1).setConstant(2.0);
  CHECK_FAILS_WITH(Errc::zero_variance, fit_block_scaling(flat));
}

TEST_CASE("path specifications are validated") {
  PathSpec ok = chain_spec({"A", "B", "C"});
  validate_path_spec(ok);
  CHECK(ok.predecessors("C") == std::vector<std::string>{"B"});
  CHECK(ok.successors("A") == std::vector<std::string>{"B"});

  PathSpec cyc = ok;
  cyc.edges.emplace_back("C", "A");
  CHECK_FAILS_WITH(Errc::invalid_path_spec, validate_path_spec(cyc));
  PathSpec self = ok;
  self.edges.emplace_back("B", "B");
  CHECK_FAILS_WITH(Errc::invalid_path_spec, validate_path_spec(self));
  PathSpec dup = ok;
  dup.edges.emplace_back("A", "B");
  CHECK_FAILS_WITH(Errc::invalid_path_spec, validate_path_spec(dup));
  PathSpec lonely = ok;
  lonely.blocks.push_back("D");
  CHECK_FAILS_WITH(Errc::invalid_path_spec, validate_path_spec(lonely));
  PathSpec empty;
  CHECK_FAILS_WITH(Errc::invalid_path_spec, validate_path_spec(empty));
}

TEST_CASE("path files round trip") {
  rptest::TempDir dir("pathspec");
  PathSpec s;
  s.blocks = {"HON", "ORL", "WSR"};
  s.edges = {{"HON", "ORL"}, {"ORL", "WSR"}, {"HON", "WSR"}};
  save_path_spec(s, dir / "edges.csv");
  auto back = load_path_spec(dir / "edges.csv");
  CHECK(back.blocks == s.blocks);
  CHECK(back.edges == s.edges);
  write_text_file(dir / "bad.csv", "a,b\nx,y\n");
  CHECK_FAILS_WITH(Errc::malformed_csv, load_path_spec(dir / "bad.csv"));
}

TEST_CASE("a copied block is explained completely") {
  Rng rng(103);
  Mat A = randn(rng, 50, 4);
  auto spec = chain_spec({"up", "down"});
  OuterParams prm;
  prm.exec = Exec::serial;
  prm.cv.max_lv = 4;
  auto model = fit_process_model({make_block("up", A), make_block("down", A)},
                                 spec, prm);
  CHECK(model.outer.block("up").r2 > 1.0 - 1e-9);
  CHECK(model.outer.block("down").r2 > 1.0 - 1e-9);
  const InnerBlock* ib = model.inner.find("down");
  REQUIRE(ib);
  CHECK(ib->p2 > 1.0 - 1e-9);
  REQUIRE(ib->partials.size() == 1);
  CHECK(ib->partials[0] == ib->p2);
}

TEST_CASE("independent blocks explain nothing") {
  Rng rng(107);
  Mat A = randn(rng, 500, 4);
  Mat B = randn(rng, 500, 4);
  auto spec = chain_spec({"a", "b"});
  OuterParams prm;
  prm.exec = Exec::serial;
  auto model = fit_process_model({make_block("a", A), make_block("b", B)},
                                 spec, prm);
  const InnerBlock* ib = model.inner.find("b");
  REQUIRE(ib);
  CHECK(ib->p2 < 0.1);
}

TEST_CASE("a junction splits credit between equal parents") {
  Rng rng(109);
  const int n = 400;
  Mat A = randn(rng, n, 3);
  Mat B = randn(rng, n, 3);
  Mat C = A + B;
  PathSpec spec;
  spec.blocks = {"a", "b", "c"};
  spec.edges = {{"a", "c"}, {"b", "c"}};
  OuterParams prm;
  prm.exec = Exec::serial;
  prm.cv.max_lv = 6;
  auto model = fit_process_model(
      {make_block("a", A), make_block("b", B), make_block("c", C)}, spec, prm);
  const InnerBlock* ib = model.inner.find("c");
  REQUIRE(ib);
  CHECK(ib->p2 > 0.9);
  REQUIRE(ib->partials.size() == 2);
  CHECK(std::abs(ib->partials[0] - ib->partials[1]) < 0.05 * ib->p2);

  // the split adds back up to the whole, bit for bit
  double sum = 0.0;
  for (double v : ib->partials) sum += v;
  CHECK(sum == ib->p2);
}

TEST_CASE("results ignore variable units") {
  Rng rng(113);
  Mat A = randn(rng, 60, 3);
  Mat B = A * randn(rng, 3, 3) + 0.05 * randn(rng, 60, 3);
  auto spec = chain_spec({"a", "b"});
  OuterParams prm;
  prm.exec = Exec::serial;
  auto base = fit_process_model({make_block("a", A), make_block("b", B)},
                                spec, prm);
  Mat A2 = A;
  A2.col(0) *= 1000.0;
  A2.col(2).array() += 55.0;
  auto scaled = fit_process_model({make_block("a", A2), make_block("b", B)},
                                  spec, prm);
  CHECK(base.outer.block("a").r2 ==
        doctest::Approx(scaled.outer.block("a").r2).epsilon(1e-9));
  CHECK(base.inner.find("b")->p2 ==
        doctest::Approx(scaled.inner.find("b")->p2).epsilon(1e-9));
}

TEST_CASE("training-row order does not matter") {
  Rng rng(127);
  const int n = 80;
  Mat T = randn(rng, n, 2);
  Mat A = T * randn(rng, 4, 2).transpose() + 0.01 * randn(rng, n, 4);
  Mat B = T * randn(rng, 3, 2).transpose() + 0.01 * randn(rng, n, 3);
  auto spec = chain_spec({"a", "b"});
  OuterParams prm;
  prm.exec = Exec::serial;
  prm.cv.max_lv = 2;  // strong two-direction structure keeps the choice stable
  auto base = fit_process_model({make_block("a", A), make_block("b", B)},
                                spec, prm);
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng prng(999);
  prng.shuffle(perm);
  Mat Ap(n, 4), Bp(n, 3);
  for (int i = 0; i < n; ++i) {
    Ap.row(i) = A.row(perm[i]);
    Bp.row(i) = B.row(perm[i]);
  }
  auto moved = fit_process_model({make_block("a", Ap), make_block("b", Bp)},
                                 spec, prm);
  CHECK(base.outer.block("a").r2 ==
        doctest::Approx(moved.outer.block("a").r2).epsilon(1e-10));
  CHECK(base.inner.find("b")->p2 ==
        doctest::Approx(moved.inner.find("b")->p2).epsilon(1e-10));
}

TEST_CASE("an exactly dependent target is predicted back") {
  Rng rng(131);
  Mat A = randn(rng, 70, 4);
  Mat M = randn(rng, 4, 4);
  Mat B = A * M;
  auto spec = chain_spec({"a", "b"});
  OuterParams prm;
  prm.exec = Exec::serial;
  prm.cv.max_lv = 4;
  auto model = fit_process_model({make_block("a", A), make_block("b", B)},
                                 spec, prm);
  Mat pred = predict_block(model, "b", {{"a", A}});
  double scale = B.cwiseAbs().maxCoeff();
  CHECK((pred - B).cwiseAbs().maxCoeff() / scale < 1e-6);

  CHECK_FAILS_WITH(Errc::bad_argument, predict_block(model, "a", {{"a", A}}));
  CHECK_FAILS_WITH(Errc::bad_argument, predict_block(model, "b", {}));
  Mat narrow = A.leftCols(3);
  CHECK_FAILS_WITH(Errc::dimension_mismatch,
                   predict_block(model, "b", {{"a", narrow}}));
}

TEST_CASE("prediction error scoring") {
  Vec m(4), p(4);
  m << 1, 2, 3, 4;
  p << 1, 2, 3, 5;
  CHECK(nrmse(m, p) == doctest::Approx(std::sqrt(0.2)).epsilon(1e-12));
  CHECK(nrmse(m, m) == 0.0);
  Vec mean_pred = Vec::Constant(4, 2.5);
  CHECK(nrmse(m, mean_pred) == doctest::Approx(1.0).epsilon(1e-12));
  Vec flat = Vec::Constant(4, 3.0);
  CHECK_FAILS_WITH(Errc::zero_variance, nrmse(flat, p));
  CHECK_FAILS_WITH(Errc::dimension_mismatch, nrmse(m, Vec::Ones(3)));
}

TEST_CASE("the report covers blocks, targets, and edges in order") {
  Rng rng(137);
  const int n = 50;
  Mat A = randn(rng, n, 3);
  Mat B = randn(rng, n, 3);
  Mat C = A + B + 0.1 * randn(rng, n, 3);
  PathSpec spec;
  spec.blocks = {"a", "b", "c"};
  spec.edges = {{"a", "c"}, {"b", "c"}};
  OuterParams prm;
  prm.exec = Exec::serial;
  auto model = fit_process_model(
      {make_block("a", A), make_block("b", B), make_block("c", C)}, spec, prm);
  auto rows = report_model(model);
  REQUIRE(rows.size() == 6);
  CHECK(rows[0].kind == "block_r2");
  CHECK(rows[0].target == "a");
  CHECK(rows[2].target == "c");
  CHECK(rows[3].kind == "inner_p2");
  CHECK(rows[3].target == "c");
  CHECK(rows[4].kind == "edge_partial");
  CHECK(rows[4].source == "a");
  CHECK(rows[5].source == "b");
  CHECK(rows[4].value + rows[5].value == doctest::Approx(rows[3].value));
}

TEST_CASE("models survive a disk round trip") {
  Rng rng(139);
  const int n = 60;
  Mat A = randn(rng, n, 4);
  Mat B = A * randn(rng, 4, 3) + 0.02 * randn(rng, n, 3);
  Mat C = B * randn(rng, 3, 3) + 0.02 * randn(rng, n, 3);
  auto spec = chain_spec({"a", "b", "c"});
  OuterParams prm;
  prm.exec = Exec::serial;
  auto model = fit_process_model(
      {make_block("a", A), make_block("b", B), make_block("c", C)}, spec, prm);
  rptest::TempDir dir("pathmodel_io");
  save_process_model(model, dir / "model");
  auto back = load_process_model(dir / "model");
  CHECK(back.outer.blocks.size() == 3);
  CHECK(back.outer.block("b").r2 == model.outer.block("b").r2);
  CHECK(back.inner.find("c")->p2 == model.inner.find("c")->p2);
  Mat p1 = predict_block(model, "c", {{"b", B}});
  Mat p2 = predict_block(back, "c", {{"b", B}});
  CHECK((p1 - p2).cwiseAbs().maxCoeff() == 0.0);

  Mat q1 = predict_block(model, "b", {{"a", A}});
  Mat q2 = predict_block(back, "b", {{"a", A}});
  CHECK((q1 - q2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("parallel and serial path fits agree") {
  Rng rng(149);
  const int n = 40;
  Mat A = randn(rng, n, 3);
  Mat B = A * randn(rng, 3, 3) + 0.05 * randn(rng, n, 3);
  Mat C = B * randn(rng, 3, 2) + 0.05 * randn(rng, n, 2);
  auto spec = chain_spec({"a", "b", "c"});
  OuterParams sprm;
  sprm.exec = Exec::serial;
  OuterParams pprm;
  pprm.exec = Exec::parallel;
  auto s = fit_process_model(
      {make_block("a", A), make_block("b", B), make_block("c", C)}, spec, sprm);
  auto p = fit_process_model(
      {make_block("a", A), make_block("b", B), make_block("c", C)}, spec, pprm);
  for (const auto& id : {"a", "b", "c"}) {
    CHECK(s.outer.block(id).r2 == p.outer.block(id).r2);
    CHECK((s.outer.block(id).scores - p.outer.block(id).scores)
              .cwiseAbs()
              .maxCoeff() == 0.0);
  }
  CHECK(s.inner.find("c")->p2 == p.inner.find("c")->p2);
}

TEST_SUITE_END();
