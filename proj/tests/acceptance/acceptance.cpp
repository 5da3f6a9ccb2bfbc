#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ovc/captioner.hpp"
#include "ovc/checkpoint.hpp"
#include "ovc/config.hpp"
#include "ovc/corpus.hpp"
#include "ovc/enhance.hpp"
#include "ovc/error.hpp"
#include "ovc/graph.hpp"
#include "ovc/metrics.hpp"
#include "ovc/synthgen.hpp"
#include "ovc/trainer.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace ovc;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

metrics::ScoredPair pair(const std::string& c, const std::string& r) {
    return {corpus::tokenize(c), {corpus::tokenize(r)}};
}

Outcome a1_metrics() {
    const auto t0 = Clock::now();
    bool ok = true;
    std::string why;
    auto expect = [&](bool cond, const std::string& what) {
        if (!cond && ok) why = what;
        ok = ok && cond;
    };
    const std::vector<metrics::ScoredPair> cat = {pair("the cat", "the cat sat")};
    expect(std::abs(metrics::bleu(cat)[1] - std::exp(-0.5)) <= 1e-9, "BLEU B@2 example");
    expect(std::abs(metrics::rouge_l(pair("a c d", "a b c d")) - 0.8356) <= 1e-4, "ROUGE-L example");
    expect(metrics::meteor_lite(pair("a b", "a b")) == 0.9375, "METEOR-lite example");
    const std::vector<metrics::ScoredPair> same = {pair("the red car goes up", "the red car goes up"),
                                                   pair("a blue dog jumps high", "a blue dog jumps high")};
    expect(std::abs(metrics::cider_d(same) - 10.0) <= 1e-6, "CIDEr-D identical pairs");

    Rng rng(2718);
    double worst = 0;
    std::size_t checked = 0;
    while (checked < 100) {
        const auto pairs = oracle::random_pairs(rng, 2 + rng.below(3));
        const auto b = metrics::bleu(pairs);
        for (std::size_t n = 1; n <= 4; ++n) worst = std::max(worst, std::abs(b[n - 1] - oracle::bleu(pairs, n)));
        worst = std::max(worst, std::abs(metrics::cider_d(pairs) - oracle::cider_d(pairs)));
        for (const auto& p : pairs) {
            worst = std::max(worst, std::abs(metrics::rouge_l(p) - oracle::rouge_l(p)));
            worst = std::max(worst, std::abs(metrics::meteor_lite(p) - oracle::meteor(p)));
        }
        checked += pairs.size();
    }
    expect(worst <= 1e-9, "oracle agreement");
    const double t = seconds_since(t0);
    expect(t < 10.0, "runtime");
    return {ok, (ok ? std::string() : why + " failed; ") + std::to_string(checked) +
                    " random pairs, max oracle deviation " + fmt("%.3g", worst) + ", " + fmt("%.2f", t) + " s"};
}

Outcome a2_gradient() {
    const auto t0 = Clock::now();
    const auto dims = gradcheck::tiny_dims();
    auto params = model::ModelParams<double>::init(dims, 41);
    const auto batch = gradcheck::tiny_batch(dims, 42, 3, 3);
    double worst = 0;
    std::string worst_name;
    for (const bool de : {true, false}) {
        for (const auto& e : gradcheck::relative_errors(params, gradcheck::pointers(batch), {0.1, de})) {
            if (e.relative > worst) {
                worst = e.relative;
                worst_name = e.name;
            }
        }
    }
    const double t = seconds_since(t0);
    return {worst < 1e-4 && t < 60.0, "max relative error " + fmt("%.3g", worst) + " (" + worst_name + "), " +
                                          fmt("%.2f", t) + " s"};
}

Outcome a3_overfit() {
    const auto t0 = Clock::now();
    synth::CorpusSpec spec;
    spec.seed = 20;
    spec.train_objects = 20;
    spec.test_objects = 1;
    const auto corpus = synth::generate_corpus(spec);
    trainer::MemoryFrames frames(corpus.videos);
    const TrainConfig config;
    trainer::Trainer t(config, corpus.train, frames);
    double accuracy = 0;
    double b4 = 0;
    while (t.epoch() < 500) {
        t.run_epoch();
        accuracy = t.token_accuracy();
        if (accuracy < 0.99) continue;
        b4 = trainer::evaluate(t.checkpoint(), corpus.train, frames).metrics.b4;
        if (b4 >= 0.95) break;
    }
    const double secs = seconds_since(t0);
    std::size_t rises = 0;
    for (std::size_t e = 5; e < t.history().size(); ++e) rises += t.history()[e].total > t.history()[e - 1].total + 1e-3;
    const bool ok = accuracy >= 0.99 && b4 >= 0.95 && secs < 300.0;
    return {ok, std::to_string(corpus.train.size()) + " pairs, epoch " + std::to_string(t.epoch()) +
                    ", loss rises after epoch 5: " + std::to_string(rises) +
                    ", token accuracy " + fmt("%.4f", accuracy) + ", train B@4 " + fmt("%.4f", b4) + ", " +
                    fmt("%.1f", secs) + " s"};
}

TrainConfig ablation_config() { return load_config(fs::path(OVC_SOURCE_DIR) / "configs" / "ablation.toml"); }

synth::Corpus ablation_corpus() {
    synth::CorpusSpec spec;
    spec.train_objects = 200;
    spec.test_objects = 50;
    return synth::generate_corpus(spec);
}

Outcome a4_ablation() {
    const auto t0 = Clock::now();
    const auto corpus = ablation_corpus();
    trainer::MemoryFrames frames(corpus.videos);
    const auto table = trainer::ablate(ablation_config(), corpus.train, corpus.test, frames, 3,
                                       [&](const std::string& row, std::size_t seed, const trainer::EvalReport& r) {
                                           std::printf("  %-14s seed %zu  B@4 %.4f  (%.0f s)\n", row.c_str(), seed,
                                                       r.metrics.b4, seconds_since(t0));
                                           std::fflush(stdout);
                                       });
    std::printf("%s", trainer::pretty(table).c_str());
    auto b4 = [&](const std::string& name) {
        for (const auto& row : table.rows) {
            if (row.name == name) return row.median.b4;
        }
        throw ValidationError("row", name);
    };
    const double global = b4("global"), local = b4("local"), gl = b4("global+local");
    const double tg = b4("+spatial (TG)"), full = b4("+DE (TG+DE)");
    const bool c1 = local > global, c2 = tg >= gl, c3 = full >= tg;
    const double secs = seconds_since(t0);
    std::string detail = std::string("local>global ") + (c1 ? "yes" : "NO") + " (" + fmt("%.4f", local) + " vs " +
                         fmt("%.4f", global) + "); TG>=G+L " + (c2 ? "yes" : "NO") + " (" + fmt("%.4f", tg) +
                         " vs " + fmt("%.4f", gl) + "); TG+DE>=TG " + (c3 ? "yes" : "NO") + " (" +
                         fmt("%.4f", full) + " vs " + fmt("%.4f", tg) + "); " + fmt("%.0f", secs) + " s";
    return {c1 && c2 && c3 && secs < 3600.0, detail};
}

Outcome a5_enhancement() {
    const auto t0 = Clock::now();
    const auto corpus = ablation_corpus();
    trainer::MemoryFrames frames(corpus.videos);
    const auto ck = trainer::train(ablation_config(), corpus.train, frames);
    const auto report = trainer::evaluate(ck, corpus.test, frames);
    return {report.de_accuracy >= 0.95, "test accuracy " + fmt("%.4f", report.de_accuracy) + " over " +
                                            std::to_string(report.objects) + " objects, " +
                                            fmt("%.1f", seconds_since(t0)) + " s"};
}

Outcome a6_invariants() {
    const auto t0 = Clock::now();
    Rng rng(606);
    double worst_alpha = 0, worst_gamma = 0;
    const int trials = 1000;
    for (int trial = 0; trial < trials; ++trial) {
        captioner::DecoderDims d{10, 6 + static_cast<int>(rng.below(6)), 5, 4 + static_cast<int>(rng.below(4)), 2,
                                 3 + static_cast<int>(rng.below(4))};
        const auto p = captioner::DecoderParams<double>::init(d, rng);
        const int nodes = 1 + static_cast<int>(rng.below(40));
        Mat<double> x(nodes, d.node_dim);
        for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.normal() * 5.0;
        auto state = captioner::DecoderState<double>::zeros(d.layers, d.hidden);
        for (auto& z : state.z) {
            for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.uniform(-1.0, 1.0);
        }
        const auto a = captioner::attend(x, state, p);
        worst_alpha = std::max(worst_alpha, std::abs(a.alpha.sum() - 1.0));

        const int in = 3 + static_cast<int>(rng.below(10));
        const auto e = enhance::EnhancerParams<double>::init(in, 8, 6, 4, rng);
        Vec<double> pooled(in);
        for (Eigen::Index i = 0; i < in; ++i) pooled[i] = rng.normal() * 10.0;
        worst_gamma = std::max(worst_gamma, std::abs(enhance::enhance_forward(pooled, e).sum() - 1.0));
    }
    const bool sums = worst_alpha <= 1e-6 && worst_gamma <= 1e-6;

    bool sampling = true;
    for (const std::size_t ts : {1u, 5u, 40u}) {
        for (std::size_t m = 1; m <= 100; ++m) {
            const auto idx = graph::sample_frames(m, ts);
            sampling = sampling && idx.size() == ts && idx.front() == 0 && idx.back() <= m - 1;
            if (ts > 1) sampling = sampling && idx.back() == m - 1;
            for (std::size_t i = 1; i < idx.size(); ++i) sampling = sampling && idx[i - 1] <= idx[i];
        }
    }

    synth::CorpusSpec spec;
    spec.seed = 66;
    spec.train_objects = 12;
    spec.test_objects = 4;
    const auto corpus = synth::generate_corpus(spec);
    const fs::path dir = fs::temp_directory_path() / "ovc_acceptance_a6";
    fs::create_directories(dir);
    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream s;
        s << in.rdbuf();
        return s.str();
    };
    corpus::save_dataset(corpus.train, dir / "a.jsonl");
    const auto reloaded = corpus::load_dataset(dir / "a.jsonl");
    corpus::save_dataset(reloaded, dir / "b.jsonl");
    const bool dataset = slurp(dir / "a.jsonl") == slurp(dir / "b.jsonl") && reloaded.size() == corpus.train.size();

    trainer::MemoryFrames frames(corpus.videos);
    TrainConfig c;
    c.embed_dim = 8;
    c.hidden_dim = 12;
    c.attention_dim = 6;
    c.feature_dim = 8;
    c.t_s = 5;
    c.epochs = 3;
    c.learning_rate = 1e-3;
    const auto first = trainer::train(c, corpus.train, frames);
    const auto second = trainer::train(c, corpus.train, frames);
    save_checkpoint(first, dir / "ck.ovck");
    const std::string bytes = serialize_checkpoint(first);
    const bool checkpoint = serialize_checkpoint(load_checkpoint(dir / "ck.ovck")) == bytes;
    const bool logs = first.history == second.history && bytes == serialize_checkpoint(second);
    fs::remove_all(dir);

    const bool ok = sums && sampling && dataset && checkpoint && logs;
    return {ok, std::to_string(trials) + " trials: max |sum alpha - 1| " + fmt("%.2g", worst_alpha) +
                    ", max |sum gamma - 1| " + fmt("%.2g", worst_gamma) + "; sampling " + (sampling ? "ok" : "FAIL") +
                    "; dataset " + (dataset ? "ok" : "FAIL") + "; checkpoint " + (checkpoint ? "ok" : "FAIL") +
                    "; loss logs " + (logs ? "ok" : "FAIL") + "; " + fmt("%.1f", seconds_since(t0)) + " s"};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria A1-A6"};
    std::vector<std::string> only;
    app.add_option("--only", only, "Criteria to run, e.g. A1 A3")->delimiter(',');
    CLI11_PARSE(app, argc, argv);

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"A1", a1_metrics},    {"A2", a2_gradient},     {"A3", a3_overfit},
        {"A4", a4_ablation},   {"A5", a5_enhancement},  {"A6", a6_invariants}};
    const std::set<std::string> wanted(only.begin(), only.end());
    for (const auto& name : wanted) {
        if (std::none_of(criteria.begin(), criteria.end(), [&](const auto& c) { return c.first == name; })) {
            std::fprintf(stderr, "unknown criterion %s\n", name.c_str());
            return 2;
        }
    }
    int failures = 0;
    for (const auto& [name, run] : criteria) {
        if (!wanted.empty() && !wanted.count(name)) continue;
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::printf("%s %s  %s\n", name.c_str(), o.pass ? "PASS" : "FAIL", o.detail.c_str());
        std::fflush(stdout);
        failures += o.pass ? 0 : 1;
    }
    return failures == 0 ? 0 : 1;
}
