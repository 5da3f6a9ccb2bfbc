#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "ovc/checkpoint.hpp"
#include "ovc/config.hpp"
#include "ovc/error.hpp"
#include "ovc/synthgen.hpp"
#include "ovc/trainer.hpp"

using namespace ovc;

namespace {

TrainConfig tiny_config() {
    TrainConfig c;
    c.embed_dim = 8;
    c.hidden_dim = 12;
    c.attention_dim = 6;
    c.enhancer_hidden1 = 8;
    c.enhancer_hidden2 = 8;
    c.feature_dim = 8;
    c.t_s = 4;
    c.batch_size = 4;
    c.epochs = 2;
    c.learning_rate = 1e-3;
    return c;
}

synth::Corpus tiny_corpus(std::size_t train = 12, std::size_t test = 6) {
    synth::CorpusSpec spec;
    spec.seed = 9;
    spec.train_objects = train;
    spec.test_objects = test;
    return synth::generate_corpus(spec);
}

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("ovc_test_" + name);
}

}  // namespace

TEST_CASE("config parsing") {
    const auto c = parse_config(R"(# comment
learning_rate = 0.001
batch_size = 16   # trailing
use_de = false
extractor = "conv"
)");
    CHECK(c.learning_rate == 0.001);
    CHECK(c.batch_size == 16);
    CHECK_FALSE(c.use_de);
    CHECK(c.extractor == "conv");
    CHECK(c.epochs == TrainConfig{}.epochs);
}

TEST_CASE("config defaults") {
    const TrainConfig c;
    CHECK(c.learning_rate == 1e-4);
    CHECK(c.beta1 == 0.9);
    CHECK(c.beta2 == 0.999);
    CHECK(c.eps == 1e-8);
    CHECK(c.batch_size == 8);
    CHECK(c.epochs == 200);
    CHECK(c.lambda == 0.1);
    CHECK(c.t_s == 40);
    CHECK(c.grad_clip == 5.0);
    CHECK(c.embed_dim == 512);
    CHECK(c.hidden_dim == 1024);
    CHECK(c.gru_layers == 2);
    CHECK(c.attention_dim == 256);
    CHECK(c.max_len == 25);
}

TEST_CASE("config text round trip") {
    TrainConfig c = tiny_config();
    c.seed = 12345;
    c.lambda = 0.3;
    c.use_color = false;
    c.precision = "float64";
    c.learning_rate = 0.1 + 0.2;
    const auto back = parse_config(to_text(c));
    CHECK(back == c);
    CHECK(to_text(back) == to_text(c));
}

TEST_CASE("config errors name the line or field") {
    try {
        parse_config("epochs = 3\nbogus = 1\n");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
    }
    CHECK_THROWS_AS(parse_config("epochs = three\n"), ParseError);
    CHECK_THROWS_AS(parse_config("epochs\n"), ParseError);
    try {
        parse_config("epochs = 3\n\nepochs = 4\n");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 3);
    }
    try {
        parse_config("batch_size = 0\n");
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(e.field() == "batch_size");
    }
    CHECK_THROWS_AS(parse_config("precision = \"half\"\n"), ValidationError);
    CHECK_THROWS_AS(parse_config("lambda = -1\n"), ValidationError);
}

TEST_CASE("checkpoint round trip is bit exact") {
    const auto corpus = tiny_corpus();
    trainer::MemoryFrames frames(corpus.videos);
    const TrainConfig c = tiny_config();
    const Checkpoint ck = trainer::train(c, corpus.train, frames);
    const std::string bytes = serialize_checkpoint(ck);
    const Checkpoint back = deserialize_checkpoint(bytes);
    CHECK(serialize_checkpoint(back) == bytes);
    CHECK(back.config == ck.config);
    CHECK(back.epoch == 2);
    CHECK(back.history == ck.history);
    CHECK(back.vocab.tokens() == ck.vocab.tokens());
    std::vector<const Eigen::MatrixXd*> a, b;
    ck.params.visit([&](const std::string&, const Eigen::MatrixXd& m) { a.push_back(&m); });
    back.params.visit([&](const std::string&, const Eigen::MatrixXd& m) { b.push_back(&m); });
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(*a[i] == *b[i]);

    const auto path = temp_path("ck.bin");
    save_checkpoint(ck, path);
    CHECK(serialize_checkpoint(load_checkpoint(path)) == bytes);
    std::filesystem::remove(path);
}

TEST_CASE("corrupt or foreign checkpoints are rejected") {
    const auto corpus = tiny_corpus();
    trainer::MemoryFrames frames(corpus.videos);
    TrainConfig c = tiny_config();
    c.epochs = 1;
    const std::string bytes = serialize_checkpoint(trainer::train(c, corpus.train, frames));

    std::string flipped = bytes;
    flipped[flipped.size() / 2] ^= 0x10;
    CHECK_THROWS_AS(deserialize_checkpoint(flipped), IoError);
    CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)), IoError);
    CHECK_THROWS_AS(deserialize_checkpoint("nope"), IoError);

    std::string future = bytes;
    future[5] = 7;
    try {
        deserialize_checkpoint(future);
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(std::string(e.what()).find("version 7") != std::string::npos);
    }
    CHECK_THROWS_AS(load_checkpoint(temp_path("missing.bin")), IoError);
}

TEST_CASE("identical seeds give identical loss logs") {
    const auto corpus = tiny_corpus();
    trainer::MemoryFrames frames(corpus.videos);
    const TrainConfig c = tiny_config();
    const auto a = trainer::train(c, corpus.train, frames);
    const auto b = trainer::train(c, corpus.train, frames);
    CHECK(a.history == b.history);
    CHECK(serialize_checkpoint(a) == serialize_checkpoint(b));
    TrainConfig other = c;
    other.seed = 1;
    CHECK_FALSE(trainer::train(other, corpus.train, frames).history == a.history);
}

TEST_CASE("loss history and CSV") {
    const auto corpus = tiny_corpus();
    trainer::MemoryFrames frames(corpus.videos);
    TrainConfig c = tiny_config();
    c.epochs = 3;
    const auto ck = trainer::train(c, corpus.train, frames);
    REQUIRE(ck.history.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(ck.history[i].epoch == i + 1);
        CHECK(ck.history[i].total == doctest::Approx(ck.history[i].l_cap + c.lambda * ck.history[i].l_de));
    }
    const std::string csv = trainer::loss_csv(ck.history);
    CHECK(csv.rfind("epoch,l_cap,l_de,total\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);

    c.use_de = false;
    for (const auto& e : trainer::train(c, corpus.train, frames).history) {
        CHECK(std::isfinite(e.l_de));
        CHECK(e.total == e.l_cap);
    }
}

TEST_CASE("early stop through the callback") {
    const auto corpus = tiny_corpus();
    trainer::MemoryFrames frames(corpus.videos);
    TrainConfig c = tiny_config();
    c.epochs = 10;
    const auto ck = trainer::train(c, corpus.train, frames, [](const EpochLog& e, trainer::Trainer&) { return e.epoch < 2; });
    CHECK(ck.epoch == 2);
}

TEST_CASE("disabled segments do not influence the model") {
    const auto corpus = tiny_corpus(4, 2);
    trainer::MemoryFrames frames(corpus.videos);
    TrainConfig c = tiny_config();
    c.use_color = false;
    c.use_spatial = false;
    const auto extractor = trainer::make_extractor(c);
    const auto& obj = corpus.train[0];
    const Eigen::MatrixXd nodes = trainer::object_nodes(obj, frames, *extractor, c);
    const graph::NodeLayout layout{static_cast<int>(c.feature_dim)};
    CHECK(nodes.middleCols(c.feature_dim, 48).isZero());
    CHECK(nodes.rightCols(4).isZero());
    CHECK_FALSE(nodes.leftCols(c.feature_dim).isZero());

    Eigen::MatrixXd perturbed = Eigen::MatrixXd::Random(nodes.rows(), nodes.cols());
    trainer::FeatureFlags flags = trainer::FeatureFlags::from(c);
    trainer::mask_nodes(perturbed, layout, flags);
    CHECK(perturbed.middleCols(c.feature_dim, 48).isZero());
    CHECK(perturbed.rightCols(4).isZero());

    flags = {};
    flags.local = false;
    flags.global = false;
    Eigen::MatrixXd only = Eigen::MatrixXd::Ones(nodes.rows(), nodes.cols());
    trainer::mask_nodes(only, layout, flags);
    CHECK(only.leftCols(c.feature_dim).isZero());
    CHECK(only.middleCols(layout.global_offset(), c.feature_dim).isZero());
    CHECK(only.middleCols(c.feature_dim, 48).isConstant(1.0));
}

TEST_CASE("evaluation reports every object") {
    const auto corpus = tiny_corpus();
    trainer::MemoryFrames frames(corpus.videos);
    const auto ck = trainer::train(tiny_config(), corpus.train, frames);
    const auto report = trainer::evaluate(ck, corpus.test, frames);
    CHECK(report.objects == corpus.test.size());
    CHECK(report.captions.size() == corpus.test.size());
    CHECK(report.de_accuracy >= 0.0);
    CHECK(report.de_accuracy <= 1.0);
    CHECK(report.metrics.cider_d >= 0.0);
    CHECK(report.metrics.cider_d <= 10.0);
    trainer::Captioner cap(ck);
    const auto g = cap.gamma(corpus.test[0], frames);
    CHECK(g.size() == 4);
    CHECK(std::abs(g.sum() - 1.0) < 1e-6);
    for (const auto& gc : report.captions) CHECK(corpus::tokenize(gc.caption).size() <= 25);

    const auto json = trainer::to_json(report, true);
    CHECK(json.contains("b4"));
    CHECK(json["captions"].size() == corpus.test.size());
}

TEST_CASE("ablation ladder") {
    const auto ladder = trainer::ablation_ladder();
    REQUIRE(ladder.size() == 6);
    CHECK(ladder[0].first == "global");
    CHECK(ladder[0].second.global);
    CHECK_FALSE(ladder[0].second.local);
    CHECK_FALSE(ladder[0].second.de);
    CHECK(ladder[1].second.local);
    CHECK_FALSE(ladder[1].second.global);
    CHECK_FALSE(ladder[2].second.color);
    CHECK(ladder[3].second.color);
    CHECK_FALSE(ladder[3].second.spatial);
    CHECK(ladder[4].second.spatial);
    CHECK_FALSE(ladder[4].second.de);
    CHECK(ladder[5].second.de);

    const auto corpus = tiny_corpus(8, 4);
    trainer::MemoryFrames frames(corpus.videos);
    TrainConfig c = tiny_config();
    c.epochs = 1;
    std::size_t calls = 0;
    const auto table = trainer::ablate(c, corpus.train, corpus.test, frames, 2,
                                       [&](const std::string&, std::size_t, const trainer::EvalReport&) { ++calls; });
    CHECK(calls == 12);
    CHECK(table.seeds == 2);
    REQUIRE(table.rows.size() == 6);
    for (const auto& row : table.rows) CHECK(row.runs.size() == 2);
    CHECK(trainer::to_json(table)["rows"].size() == 6);
    CHECK(trainer::pretty(table).find("+DE (TG+DE)") != std::string::npos);
}

TEST_CASE("median") {
    CHECK(trainer::median({3.0, 1.0, 2.0}) == 2.0);
    CHECK(trainer::median({4.0, 1.0}) == 2.5);
    CHECK(trainer::median({}) == 0.0);
}

TEST_CASE("frame sources") {
    trainer::MemoryFrames empty;
    CHECK_THROWS_AS(empty.video("v"), IoError);
    trainer::DirectoryFrames dir(temp_path("nowhere"));
    CHECK_THROWS_AS(dir.video("v"), IoError);

    const auto corpus = tiny_corpus(4, 2);
    const auto root = temp_path("corpus");
    std::filesystem::remove_all(root);
    synth::write_corpus(corpus, root);
    trainer::DirectoryFrames disk(root);
    trainer::MemoryFrames memory(corpus.videos);
    const auto& id = corpus.train[0].video_id;
    CHECK(disk.video(id).size() == memory.video(id).size());
    CHECK(disk.video(id).front().data() == memory.video(id).front().data());
    std::filesystem::remove_all(root);
}

TEST_CASE("masked segments cannot change the loss") {
    const auto corpus = tiny_corpus(4, 2);
    trainer::MemoryFrames frames(corpus.videos);
    TrainConfig c = tiny_config();
    const graph::NodeLayout layout{c.feature_dim};
    const auto dims = c.dims(12);
    const auto params = model::ModelParams<double>::init(dims, 5);
    Rng rng(17);
    for (const auto& [name, flags] : trainer::ablation_ladder()) {
        flags.apply(c);
        const auto extractor = trainer::make_extractor(c);
        model::Sample<double> s;
        s.nodes = trainer::object_nodes(corpus.train[0], frames, *extractor, c);
        s.label = 1;
        s.sequence = {1, 5, 6, 7, 2};
        Eigen::MatrixXd noise(s.nodes.rows(), s.nodes.cols());
        for (Eigen::Index i = 0; i < noise.size(); ++i) noise(i) = rng.normal();
        Eigen::MatrixXd masked_noise = noise;
        trainer::mask_nodes(masked_noise, layout, flags);
        model::Sample<double> perturbed = s;
        perturbed.nodes += noise - masked_noise;  // touches only disabled segments
        trainer::mask_nodes(perturbed.nodes, layout, flags);
        const model::LossOptions opt{c.lambda, c.use_de};
        CHECK(model::sample_loss(params, perturbed, opt) == model::sample_loss(params, s, opt));
    }
}

TEST_CASE("at least one of global and local features is required") {
    CHECK_THROWS_AS(parse_config("use_global = false\nuse_local = false\n"), ValidationError);
}

TEST_CASE("evaluation is deterministic and survives a save and load") {
    const auto corpus = tiny_corpus();
    trainer::MemoryFrames frames(corpus.videos);
    const auto ck = trainer::train(tiny_config(), corpus.train, frames);
    const auto a = trainer::to_json(trainer::evaluate(ck, corpus.test, frames), true).dump();
    CHECK(trainer::to_json(trainer::evaluate(ck, corpus.test, frames), true).dump() == a);
    const auto path = temp_path("eval.ovck");
    save_checkpoint(ck, path);
    CHECK(trainer::to_json(trainer::evaluate(load_checkpoint(path), corpus.test, frames), true).dump() == a);
    std::filesystem::remove(path);
}

TEST_CASE("overfit loss is monotone after epoch 5") {
    synth::CorpusSpec spec;
    spec.seed = 20;
    spec.train_objects = 20;
    spec.test_objects = 1;
    const auto corpus = synth::generate_corpus(spec);
    trainer::MemoryFrames frames(corpus.videos);
    TrainConfig c;
    c.embed_dim = 32;
    c.hidden_dim = 64;
    c.attention_dim = 16;
    c.feature_dim = 16;
    c.t_s = 8;
    c.epochs = 40;
    c.learning_rate = 1e-3;
    const auto ck = trainer::train(c, corpus.train, frames);
    for (std::size_t e = 5; e < ck.history.size(); ++e) {
        CHECK(ck.history[e].total <= ck.history[e - 1].total + 1e-3);
    }
}
