#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "anymodal/data.hpp"
#include "anymodal/modality.hpp"
#include "anymodal/projector.hpp"

#include <random>

using namespace anymodal;

namespace {

ModalitySignal random_image(std::mt19937_64& rng, int h = 16, int w = 16) {
    ModalitySignal s;
    s.kind = Modality::image;
    s.image.h = h;
    s.image.w = w;
    s.image.c = 3;
    s.image.data.resize(static_cast<size_t>(h * w * 3));
    std::uniform_real_distribution<double> d(0, 1);
    for (auto& v : s.image.data) v = d(rng);
    return s;
}

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return a.dot(b) / (a.norm() * b.norm());
}

} // namespace

TEST_CASE("signal validation") {
    ModalitySignal s;
    s.kind = Modality::image;
    s.image.h = 2; s.image.w = 2; s.image.c = 3;
    s.image.data.assign(11, 0.5); // wrong size
    CHECK_THROWS(s.validate());
    s.image.data.assign(12, 0.5);
    CHECK_NOTHROW(s.validate());
    s.image.data[3] = std::nan("");
    CHECK_THROWS(s.validate());

    ModalitySignal a;
    a.kind = Modality::audio;
    CHECK_THROWS(a.validate()); // empty
    a.audio.assign(10, 0.1);
    CHECK_NOTHROW(a.validate());

    ModalitySignal m;
    m.kind = Modality::imu;
    m.imu = Mat::Zero(4, 5); // want T x 6
    CHECK_THROWS(m.validate());
    m.imu = Mat::Zero(4, 6);
    CHECK_NOTHROW(m.validate());
}

TEST_CASE("encoders are deterministic and sized") {
    std::mt19937_64 rng(3);
    ModalitySignal s = random_image(rng);
    Mat f1 = encode_modality(s);
    Mat f2 = encode_modality(s);
    CHECK(f1.rows() == 16); // 4x4 patch grid
    CHECK(f1.cols() == kSynthEncDim);
    CHECK((f1 - f2).cwiseAbs().maxCoeff() == 0.0);

    ModalitySignal a;
    a.kind = Modality::audio;
    a.audio.assign(100, 0.25);
    Mat fa = encode_modality(a);
    CHECK(fa.rows() == 4); // ceil(100/32) windows
    CHECK(fa.cols() == kSynthEncDim);

    ModalitySignal m;
    m.kind = Modality::imu;
    m.imu = Mat::Random(20, 6);
    CHECK(encode_modality(m).rows() == 3); // ceil(20/8)

    ModalitySignal v;
    v.kind = Modality::video;
    v.video = {s.image, s.image, s.image};
    CHECK(encode_modality(v).rows() == 3);
}

TEST_CASE("encoder kind mismatch is rejected") {
    std::mt19937_64 rng(4);
    ModalitySignal s = random_image(rng);
    CHECK_THROWS(encode_modality(s, encoder_registry().get("synth-audio-v1")));
    CHECK_THROWS(encoder_registry().get("no-such-encoder"));
}

TEST_CASE("features separate synthetic classes") {
    // same-class image pairs are closer in feature space than cross-class
    // pairs, averaged over many draws of the committed corpus generator
    std::mt19937_64 rng(5);
    auto make = [&](int color, int shape) {
        ModalitySignal s;
        s.kind = Modality::image;
        s.image = detail::draw_shape_image(color, shape, 0, rng);
        return s;
    };
    double same = 0, cross = 0;
    int n = 0;
    for (int it = 0; it < 100; ++it) {
        Mat a = encode_modality(make(0, 0));
        Mat b = encode_modality(make(0, 0));
        Mat c = encode_modality(make(2, 1));
        Eigen::VectorXd va = Eigen::Map<Eigen::VectorXd>(a.data(), a.size());
        Eigen::VectorXd vb = Eigen::Map<Eigen::VectorXd>(b.data(), b.size());
        Eigen::VectorXd vc = Eigen::Map<Eigen::VectorXd>(c.data(), c.size());
        same += cosine(va, vb);
        cross += cosine(va, vc);
        ++n;
    }
    CHECK(same / n > cross / n);
}

TEST_CASE("projector config round trip and validation") {
    ProjectorConfig c;
    c.kind = Modality::video;
    c.variant = ProjectorVariant::resampler;
    c.tokens = 32;
    c.depth = 4;
    ProjectorConfig back = ProjectorConfig::from_json(c.to_json());
    CHECK(back.kind == Modality::video);
    CHECK(back.depth == 4);
    c.tokens = 0;
    CHECK_THROWS(c.validate());
}

TEST_CASE("token budget invariance") {
    for (ProjectorVariant variant : {ProjectorVariant::resampler, ProjectorVariant::linear}) {
        ProjectorConfig c;
        c.variant = variant;
        c.tokens = 8;
        c.depth = 2;
        c.heads = 2;
        c.enc_dim = 5;
        c.model_dim = 12;
        ParamStore store;
        std::mt19937_64 rng(6);
        Projector proj(c, store, rng);
        for (int n : {1, 3, 8, 100}) {
            Tape t;
            Var out = proj.project(t, Mat::Random(n, 5));
            CHECK(t.val(out).rows() == 8);
            CHECK(t.val(out).cols() == 12);
        }
        Tape t;
        CHECK_THROWS(proj.project(t, Mat::Random(3, 4))); // enc_dim mismatch
        CHECK_THROWS(proj.project(t, Mat(0, 5)));          // empty
    }
}

TEST_CASE("linear projector: identity map special cases") {
    ProjectorConfig c;
    c.variant = ProjectorVariant::linear;
    c.tokens = 4;
    c.enc_dim = 4;
    c.model_dim = 4;
    ParamStore store;
    std::mt19937_64 rng(7);
    Projector proj(c, store, rng);
    store.get("proj.image.w").value = Mat::Identity(4, 4);
    store.get("proj.image.b").value.setZero();

    SUBCASE("n = k passes features through") {
        Mat f = Mat::Random(4, 4);
        Tape t;
        CHECK((t.val(proj.project(t, f)) - f).cwiseAbs().maxCoeff() < 1e-15);
    }
    SUBCASE("n = 2k with duplicated pairs deduplicates") {
        Mat base = Mat::Random(4, 4);
        Mat f(8, 4);
        for (int i = 0; i < 4; ++i) {
            f.row(2 * i) = base.row(i);
            f.row(2 * i + 1) = base.row(i);
        }
        Tape t;
        CHECK((t.val(proj.project(t, f)) - base).cwiseAbs().maxCoeff() < 1e-15);
    }
}

TEST_CASE("linear projector matches brute-force chunk-mean oracle") {
    ProjectorConfig c;
    c.variant = ProjectorVariant::linear;
    c.tokens = 3;
    c.enc_dim = 5;
    c.model_dim = 6;
    ParamStore store;
    std::mt19937_64 rng(8);
    Projector proj(c, store, rng);
    Mat f = Mat::Random(7, 5); // n=7, k=3 -> chunk size 3, last row repeated twice
    Tape t;
    Mat got = t.val(proj.project(t, f));

    const Mat& W = store.get("proj.image.w").value;
    const Mat& b = store.get("proj.image.b").value;
    Mat padded(9, 5);
    padded.topRows(7) = f;
    padded.row(7) = f.row(6);
    padded.row(8) = f.row(6);
    Mat mapped = padded * W;
    mapped.rowwise() += b.row(0);
    Mat want(3, 6);
    for (int j = 0; j < 3; ++j) want.row(j) = mapped.middleRows(3 * j, 3).colwise().mean();
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("resampler: zero output weights leave latents intact") {
    ProjectorConfig c;
    c.variant = ProjectorVariant::resampler;
    c.tokens = 4;
    c.depth = 3;
    c.heads = 2;
    c.enc_dim = 5;
    c.model_dim = 8;
    ParamStore store;
    std::mt19937_64 rng(9);
    Projector proj(c, store, rng);
    for (int i = 0; i < 3; ++i) {
        store.get("proj.image.block" + std::to_string(i) + ".wo").value.setZero();
        store.get("proj.image.block" + std::to_string(i) + ".mlp.w2").value.setZero();
        store.get("proj.image.block" + std::to_string(i) + ".mlp.b2").value.setZero();
    }
    Tape t;
    Var out = proj.project(t, Mat::Random(6, 5));
    CHECK((t.val(out) - store.get("proj.image.latents").value).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("resampler micro-case matches hand-rolled attention oracle") {
    // depth=1, k=2, enc_dim=model_dim=2, one head
    ProjectorConfig c;
    c.variant = ProjectorVariant::resampler;
    c.tokens = 2;
    c.depth = 1;
    c.heads = 1;
    c.enc_dim = 2;
    c.model_dim = 2;
    ParamStore store;
    std::mt19937_64 rng(10);
    Projector proj(c, store, rng);
    Mat f = Mat::Random(3, 2);
    Tape t;
    Mat got = t.val(proj.project(t, f));

    auto P = [&](const std::string& n) { return store.get("proj.image." + n).value; };
    auto ln = [](const Mat& x, const Mat& g, const Mat& b) {
        Mat out = x;
        for (int r = 0; r < x.rows(); ++r) {
            double mu = x.row(r).mean();
            double var = (x.row(r).array() - mu).square().mean();
            out.row(r) =
                (((x.row(r).array() - mu) / std::sqrt(var + 1e-5)) * g.row(0).array()).matrix() +
                b.row(0);
        }
        return out;
    };
    Mat fm = f * P("in.w");
    fm.rowwise() += P("in.b").row(0);
    Mat lat = P("latents");
    Mat kv(5, 2);
    kv.topRows(3) = fm;
    kv.bottomRows(2) = lat;
    Mat q = ln(lat, P("block0.ln_q.g"), P("block0.ln_q.b")) * P("block0.wq");
    Mat kvn = ln(kv, P("block0.ln_kv.g"), P("block0.ln_kv.b"));
    Mat k = kvn * P("block0.wk");
    Mat v = kvn * P("block0.wv");
    Mat sc = q * k.transpose() / std::sqrt(2.0);
    Mat att(2, 2);
    for (int r = 0; r < 2; ++r) {
        Eigen::RowVectorXd e = (sc.row(r).array() - sc.row(r).maxCoeff()).exp();
        att.row(r) = (e / e.sum()) * v;
    }
    lat += att * P("block0.wo");
    Mat h = ln(lat, P("block0.ln_m.g"), P("block0.ln_m.b"));
    Mat m = h * P("block0.mlp.w1");
    m.rowwise() += P("block0.mlp.b1").row(0);
    for (int i = 0; i < m.size(); ++i)
        m.data()[i] = 0.5 * m.data()[i] * (1 + std::erf(m.data()[i] / std::sqrt(2.0)));
    Mat m2 = m * P("block0.mlp.w2");
    m2.rowwise() += P("block0.mlp.b2").row(0);
    lat += m2;
    CHECK((got - lat).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("projector gradients match finite differences") {
    for (ProjectorVariant variant : {ProjectorVariant::resampler, ProjectorVariant::linear}) {
        ProjectorConfig c;
        c.variant = variant;
        c.tokens = 2;
        c.depth = 1;
        c.heads = 1;
        c.enc_dim = 3;
        c.model_dim = 4;
        ParamStore store;
        std::mt19937_64 rng(11);
        Projector proj(c, store, rng);
        store.set_trainable_by_prefix({"proj."});
        Mat f = Mat::Random(5, 3);
        Mat R = Mat::Random(4, 1); // fixed readout direction

        auto loss_at = [&]() {
            Tape t;
            Var out = proj.project(t, f);
            Var g = t.gelu(out);
            Var s = t.matmul(t.constant(Mat::Ones(1, 2)), t.matmul(g, t.constant(R)));
            return t.val(s)(0, 0);
        };
        auto grad_of = [&](Param& p) {
            store.zero_grads();
            Tape t;
            Var out = proj.project(t, f);
            Var g = t.gelu(out);
            Var s = t.matmul(t.constant(Mat::Ones(1, 2)), t.matmul(g, t.constant(R)));
            t.backward(s);
            return Mat(p.grad);
        };
        for (const auto& name : store.trainable_names()) {
            Param& p = store.get(name);
            Mat analytic = grad_of(p);
            const double h = 1e-6;
            for (int i = 0; i < p.value.rows(); ++i)
                for (int j = 0; j < p.value.cols(); ++j) {
                    double orig = p.value(i, j);
                    p.value(i, j) = orig + h;
                    double fp = loss_at();
                    p.value(i, j) = orig - h;
                    double fm = loss_at();
                    p.value(i, j) = orig;
                    double num = (fp - fm) / (2 * h);
                    CHECK(std::abs(analytic(i, j) - num) / std::max(1.0, std::abs(num)) < 1e-4);
                }
        }
    }
}

TEST_CASE("encoders carry no trainable parameters") {
    // encoding happens outside the ParamStore entirely: a fresh store stays
    // empty after encoding every modality
    ParamStore store;
    std::mt19937_64 rng(12);
    ModalitySignal s = random_image(rng);
    encode_modality(s);
    CHECK(store.names().empty());
}
