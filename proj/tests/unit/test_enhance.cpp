#include <doctest.h>

#include <cmath>

#include "ovc/enhance.hpp"
#include "ovc/error.hpp"
#include "ovc/graph.hpp"

using namespace ovc;
using namespace ovc::enhance;

namespace {

EnhancerParams<double> random_params(int in, std::uint64_t seed) {
    Rng rng(seed);
    return EnhancerParams<double>::init(in, 9, 7, 4, rng);
}

EnhancerParams<double> zero_params(int in) {
    auto p = random_params(in, 1);
    p.visit([](const std::string&, Mat<double>& m) { m.setZero(); });
    return p;
}

Vec<double> random_vec(Rng& rng, int n, double scale = 1.0) {
    Vec<double> v(n);
    for (int i = 0; i < n; ++i) v[i] = rng.normal() * scale;
    return v;
}

}  // namespace

TEST_CASE("mean_pool_local") {
    Mat<double> nodes(2, 4);
    nodes << 0, 2, 9, 9, 2, 0, 7, 7;
    CHECK(mean_pool_local<double>(nodes, 2) == Vec<double>((Vec<double>(2) << 1, 1).finished()));
    Mat<double> same = Mat<double>::Ones(5, 6) * 3.0;
    CHECK(mean_pool_local<double>(same, 4) == Vec<double>::Constant(4, 3.0));

    graph::TemporalGraph g;
    g.feature_dim = 2;
    for (int t = 0; t < 3; ++t) {
        graph::GraphNode n;
        n.local = Eigen::VectorXd::Constant(50, t);
        n.global = Eigen::VectorXd::Zero(2);
        n.box = Eigen::Vector4d::Zero();
        g.nodes.push_back(n);
    }
    const auto pooled = mean_pool_local(g);
    CHECK(pooled.size() == 50);
    CHECK(pooled.isApprox(Eigen::VectorXd::Constant(50, 1.0)));
}

TEST_CASE("enhance_forward probability simplex") {
    const Vec<double> x = Vec<double>::LinSpaced(6, -1, 1);
    const auto uniform = enhance_forward(x, zero_params(6));
    for (int i = 0; i < 4; ++i) CHECK(uniform[i] == doctest::Approx(0.25).epsilon(1e-15));

    auto p = random_params(6, 3);
    const auto g = enhance_forward(x, p);
    p.b3.array() += 17.0;
    const auto shifted = enhance_forward(x, p);
    CHECK((g - shifted).cwiseAbs().maxCoeff() < 1e-12);

    Rng rng(12);
    for (int trial = 0; trial < 200; ++trial) {
        const auto q = random_params(6, rng.next());
        const auto gamma = enhance_forward(random_vec(rng, 6, 5.0), q);
        CHECK(std::abs(gamma.sum() - 1.0) < 1e-12);
        CHECK(gamma.minCoeff() >= 0.0);
    }
    CHECK_THROWS_AS(enhance_forward(Vec<double>(Vec<double>::Zero(5)), p), ValidationError);
}

TEST_CASE("de_loss values") {
    Vec<double> onehot = Vec<double>::Zero(4);
    onehot[2] = 1.0;
    CHECK(de_loss(onehot, 2) == 0.0);
    CHECK(de_loss(Vec<double>(Vec<double>::Constant(4, 0.25)), 1) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
    Vec<double> half(4);
    half << 0.5, 0.25, 0.125, 0.125;
    CHECK(de_loss(half, 0) == doctest::Approx(0.6931471805599453).epsilon(1e-12));
    CHECK(de_loss(onehot, 0) == doctest::Approx(-std::log(1e-12)));
    CHECK(std::isfinite(de_loss(onehot, 0)));
}

TEST_CASE("fuse appends gamma without touching the node") {
    graph::TemporalGraph g;
    g.feature_dim = 64;
    for (int t = 0; t < 3; ++t) {
        graph::GraphNode n;
        n.local = Eigen::VectorXd::Constant(112, t + 0.5);
        n.global = Eigen::VectorXd::Constant(64, -t);
        n.box = Eigen::Vector4d(0.1, 0.2, 0.3, 0.4);
        g.nodes.push_back(n);
    }
    const Eigen::Vector4d gamma(0.1, 0.2, 0.3, 0.4);
    const auto h = fuse(g, gamma);
    CHECK(h.rows() == 3);
    CHECK(h.cols() == 184);
    CHECK(h.leftCols(180) == g.node_matrix());
    for (int t = 0; t < 3; ++t) CHECK(h.row(t).tail(4).transpose() == gamma);
}

TEST_CASE("enhancer gradient matches central differences") {
    // Analytic gradient of de_loss(softmax(MLP(x))) with respect to every
    // parameter, compared with (L(p+h) - L(p-h)) / 2h.
    Rng rng(77);
    for (int trial = 0; trial < 5; ++trial) {
        auto p = random_params(6, rng.next());
        const Vec<double> x = random_vec(rng, 6);
        const int label = static_cast<int>(rng.below(4));
        const Vec<double> a1 = p.w1 * x + p.b1.col(0);
        const Vec<double> h1 = a1.cwiseMax(0.0);
        const Vec<double> a2 = p.w2 * h1 + p.b2.col(0);
        const Vec<double> h2 = a2.cwiseMax(0.0);
        Vec<double> d3 = enhance_forward(x, p);
        d3[label] -= 1.0;
        const Vec<double> d2 = (p.w3.transpose() * d3).cwiseProduct((a2.array() > 0).cast<double>().matrix());
        const Vec<double> d1 = (p.w2.transpose() * d2).cwiseProduct((a1.array() > 0).cast<double>().matrix());
        EnhancerParams<double> g{d1 * x.transpose(), d1, d2 * h1.transpose(), d2, d3 * h2.transpose(), d3};

        std::vector<Mat<double>*> ps, gs;
        p.visit([&](const std::string&, Mat<double>& m) { ps.push_back(&m); });
        g.visit([&](const std::string&, Mat<double>& m) { gs.push_back(&m); });
        for (std::size_t k = 0; k < ps.size(); ++k) {
            Mat<double> fd(ps[k]->rows(), ps[k]->cols());
            for (Eigen::Index i = 0; i < ps[k]->size(); ++i) {
                const double old = (*ps[k])(i);
                (*ps[k])(i) = old + 1e-5;
                const double lp = de_loss(enhance_forward(x, p), label);
                (*ps[k])(i) = old - 1e-5;
                const double lm = de_loss(enhance_forward(x, p), label);
                (*ps[k])(i) = old;
                fd(i) = (lp - lm) / 2e-5;
            }
            const double rel = (fd - *gs[k]).norm() / std::max(1e-12, fd.norm() + gs[k]->norm());
            CHECK(rel < 1e-4);
        }
    }
}
