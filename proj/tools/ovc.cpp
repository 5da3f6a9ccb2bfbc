#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ovc/checkpoint.hpp"
#include "ovc/config.hpp"
#include "ovc/corpus.hpp"
#include "ovc/error.hpp"
#include "ovc/metrics.hpp"
#include "ovc/synthgen.hpp"
#include "ovc/trainer.hpp"

namespace fs = std::filesystem;
using namespace ovc;
using nlohmann::ordered_json;

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
}

std::string hash_hex(const std::string& bytes) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(bytes.data(), bytes.size())));
    return buf;
}

/// Hash of a file, or of every regular file below a directory in path order.
std::string hash_input(const fs::path& path) {
    if (!fs::exists(path)) throw IoError("no such file or directory: " + path.string());
    if (!fs::is_directory(path)) return hash_hex(read_file(path));
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(path)) {
        if (e.is_regular_file() && e.path().filename() != "manifest.json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::string all;
    for (const auto& f : files) {
        all += fs::relative(f, path).generic_string();
        all += '\0';
        all += hash_hex(read_file(f));
    }
    return hash_hex(all);
}

struct Manifest {
    std::string command;
    std::vector<std::string> argv;
    std::string config_path;
    std::uint64_t seed = 0;
    std::string seed_source = "config";
    std::string config_text;
    std::vector<std::pair<std::string, fs::path>> inputs;

    void write(const fs::path& out) const {
        ordered_json j;
        j["command"] = command;
        j["argv"] = argv;
        j["config_path"] = config_path;
        j["seed"] = seed;
        j["seed_source"] = seed_source;
        j["out"] = out.generic_string();
        j["config"] = config_text;
        ordered_json in = ordered_json::object();
        for (const auto& [name, path] : inputs) {
            in[name] = {{"path", path.generic_string()}, {"fnv1a64", hash_input(path)}};
        }
        j["inputs"] = in;
        fs::create_directories(out);
        write_file(out / "manifest.json", j.dump(2) + "\n");
    }
};

/// Flag beats OVC_SEED, which beats the configured value.
std::pair<std::uint64_t, std::string> resolve_seed(const std::optional<std::uint64_t>& flag, std::uint64_t configured) {
    if (flag) return {*flag, "flag"};
    if (const char* env = std::getenv("OVC_SEED"); env && *env) {
        try {
            std::size_t used = 0;
            const unsigned long long v = std::stoull(env, &used);
            if (used != std::string(env).size()) throw std::invalid_argument(env);
            return {v, "env"};
        } catch (const std::exception&) {
            throw ValidationError("OVC_SEED", std::string("not an unsigned integer: '") + env + "'");
        }
    }
    return {configured, "config"};
}

std::vector<corpus::AnnotatedObject> load_split(const fs::path& data, const std::string& split) {
    return corpus::load_dataset(data / (split + ".jsonl"));
}

struct Options {
    std::vector<std::string> argv;
    std::string spec, out, config, data, ckpt, object, cand, ref, split = "test", idf = "self";
    std::optional<std::uint64_t> seed;
    std::size_t seeds = 3;
    bool pretty = false;
    bool captions = false;
};

Manifest manifest(std::string command, const Options& o, std::string config_path) {
    Manifest m;
    m.command = std::move(command);
    m.argv = o.argv;
    m.config_path = std::move(config_path);
    return m;
}

int run_synth(const Options& o) {
    synth::CorpusSpec spec = synth::parse_corpus_spec(read_file(o.spec));
    Manifest m = manifest("synth", o, o.spec);
    std::tie(m.seed, m.seed_source) = resolve_seed(o.seed, spec.seed);
    spec.seed = m.seed;
    m.inputs = {{"spec", o.spec}};
    m.write(o.out);
    const auto corpus = synth::generate_corpus(spec);
    synth::write_corpus(corpus, o.out);
    std::cout << ordered_json{{"train_objects", corpus.train.size()},
                              {"test_objects", corpus.test.size()},
                              {"videos", corpus.videos.size()},
                              {"out", o.out}}
                     .dump()
              << "\n";
    return 0;
}

TrainConfig config_with_seed(const Options& o, Manifest& m) {
    TrainConfig config = o.config.empty() ? TrainConfig{} : load_config(o.config);
    std::tie(m.seed, m.seed_source) = resolve_seed(o.seed, config.seed);
    config.seed = m.seed;
    m.config_text = to_text(config);
    if (!o.config.empty()) m.inputs.emplace_back("config", o.config);
    return config;
}

int run_train(const Options& o) {
    Manifest m = manifest("train", o, o.config);
    const TrainConfig config = config_with_seed(o, m);
    m.inputs.emplace_back("data", o.data);
    const auto objects = load_split(o.data, "train");
    m.write(o.out);
    trainer::DirectoryFrames frames(o.data);
    fs::path out(o.out);
    const Checkpoint ck = trainer::train(config, objects, frames, [&](const EpochLog& e, trainer::Trainer&) {
        std::fprintf(stderr, "epoch %zu l_cap %.6f l_de %.6f total %.6f\n", e.epoch, e.l_cap, e.l_de, e.total);
        return true;
    });
    save_checkpoint(ck, out / "checkpoint.ovck");
    write_file(out / "loss.csv", trainer::loss_csv(ck.history));
    std::cout << ordered_json{{"checkpoint", (out / "checkpoint.ovck").generic_string()},
                              {"epochs", ck.epoch},
                              {"vocab", ck.vocab.size()}}
                     .dump()
              << "\n";
    return 0;
}

int run_eval(const Options& o) {
    const Checkpoint ck = load_checkpoint(o.ckpt);
    const auto objects = load_split(o.data, o.split);
    if (!o.out.empty()) {
        Manifest m = manifest("eval", o, "");
        m.seed = ck.config.seed;
        m.seed_source = "checkpoint";
        m.config_text = to_text(ck.config);
        m.inputs = {{"checkpoint", o.ckpt}, {"data", o.data}};
        m.write(o.out);
    }
    trainer::DirectoryFrames frames(o.data);
    std::optional<metrics::CiderIdf> idf;
    if (o.idf != "self") {
        std::vector<std::vector<metrics::Tokens>> docs;
        for (const auto& obj : load_split(o.data, o.idf)) docs.push_back({obj.caption.tokens});
        idf = metrics::CiderIdf::from_documents(docs);
    }
    const auto report = trainer::evaluate(ck, objects, frames, idf ? &*idf : nullptr);
    const std::string text = o.pretty ? trainer::pretty(report.metrics) : trainer::to_json(report, o.captions).dump(2) + "\n";
    std::cout << text;
    if (!o.out.empty()) write_file(fs::path(o.out) / "eval.json", trainer::to_json(report, true).dump(2) + "\n");
    return 0;
}

int run_generate(const Options& o) {
    const Checkpoint ck = load_checkpoint(o.ckpt);
    const corpus::AnnotatedObject* found = nullptr;
    std::vector<corpus::AnnotatedObject> objects;
    for (const char* split : {"train", "test"}) {
        const fs::path path = fs::path(o.data) / (std::string(split) + ".jsonl");
        if (!fs::exists(path)) continue;
        objects = corpus::load_dataset(path);
        found = corpus::find_object(objects, o.object);
        if (found) break;
    }
    if (!found) throw ValidationError("object", "no object '" + o.object + "' under " + o.data);
    trainer::DirectoryFrames frames(o.data);
    trainer::Captioner captioner(ck);
    std::cout << captioner.caption(*found, frames).raw << "\n";
    return 0;
}

std::vector<std::string> read_lines(const fs::path& path) {
    std::istringstream in(read_file(path));
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

int run_score(const Options& o) {
    const auto cands = read_lines(o.cand);
    const auto refs = read_lines(o.ref);
    if (cands.size() != refs.size()) {
        throw ValidationError("ref", std::to_string(cands.size()) + " candidates but " + std::to_string(refs.size()) +
                                         " reference lines");
    }
    std::vector<metrics::ScoredPair> pairs;
    for (std::size_t i = 0; i < cands.size(); ++i) {
        metrics::ScoredPair p;
        p.candidate = corpus::tokenize(cands[i]);
        std::istringstream alts(refs[i]);
        for (std::string r; std::getline(alts, r, '\t');) p.references.push_back(corpus::tokenize(r));
        pairs.push_back(std::move(p));
    }
    const auto report = metrics::score_all(pairs);
    std::cout << (o.pretty ? trainer::pretty(report) : trainer::to_json(report).dump(2) + "\n");
    return 0;
}

int run_ablate(const Options& o) {
    Manifest m = manifest("ablate", o, o.config);
    const TrainConfig config = config_with_seed(o, m);
    m.inputs.emplace_back("data", o.data);
    const auto train = load_split(o.data, "train");
    const auto test = load_split(o.data, "test");
    if (!o.out.empty()) m.write(o.out);
    trainer::DirectoryFrames frames(o.data);
    const auto table = trainer::ablate(config, train, test, frames, o.seeds,
                                       [](const std::string& row, std::size_t seed, const trainer::EvalReport& r) {
                                           std::fprintf(stderr, "%s seed %zu b4 %.4f\n", row.c_str(), seed, r.metrics.b4);
                                       });
    std::cout << (o.pretty ? trainer::pretty(table) : trainer::to_json(table).dump(2) + "\n");
    if (!o.out.empty()) write_file(fs::path(o.out) / "ablation.json", trainer::to_json(table).dump(2) + "\n");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    Options o;
    o.argv.assign(argv, argv + argc);
    CLI::App app{"Object-oriented video captioning"};
    app.require_subcommand(1);

    auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
    synth->add_option("--spec", o.spec, "Corpus spec JSON")->required()->check(CLI::ExistingFile);
    synth->add_option("--out", o.out, "Output directory")->required();
    synth->add_option("--seed", o.seed, "Seed override");

    auto* train = app.add_subcommand("train", "Train a model");
    train->add_option("--config", o.config, "Config file")->check(CLI::ExistingFile);
    train->add_option("--data", o.data, "Corpus directory")->required()->check(CLI::ExistingDirectory);
    train->add_option("--out", o.out, "Output directory")->required();
    train->add_option("--seed", o.seed, "Seed override");

    auto* eval = app.add_subcommand("eval", "Score a checkpoint on a split");
    eval->add_option("--ckpt", o.ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
    eval->add_option("--data", o.data, "Corpus directory")->required()->check(CLI::ExistingDirectory);
    eval->add_option("--split", o.split, "Split name")->capture_default_str();
    eval->add_option("--idf", o.idf, "CIDEr-D IDF source: self or a split name")->capture_default_str();
    eval->add_option("--out", o.out, "Write manifest and full report here");
    eval->add_flag("--captions", o.captions, "Include generated captions");
    eval->add_flag("--pretty", o.pretty, "Human-readable table");

    auto* generate = app.add_subcommand("generate", "Caption one object");
    generate->add_option("--ckpt", o.ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
    generate->add_option("--object", o.object, "Object id")->required();
    generate->add_option("--data", o.data, "Corpus directory")->capture_default_str()->check(CLI::ExistingDirectory);
    o.data = ".";

    auto* score = app.add_subcommand("score", "Score candidate captions against references");
    score->add_option("--cand", o.cand, "One candidate per line")->required()->check(CLI::ExistingFile);
    score->add_option("--ref", o.ref, "Tab-separated references per line")->required()->check(CLI::ExistingFile);
    score->add_flag("--pretty", o.pretty, "Human-readable table");

    auto* ablate = app.add_subcommand("ablate", "Run the feature ablation ladder");
    ablate->add_option("--config", o.config, "Config file")->check(CLI::ExistingFile);
    ablate->add_option("--data", o.data, "Corpus directory")->required()->check(CLI::ExistingDirectory);
    ablate->add_option("--seeds", o.seeds, "Seeds per row")->capture_default_str()->check(CLI::PositiveNumber);
    ablate->add_option("--seed", o.seed, "Base seed override");
    ablate->add_option("--out", o.out, "Write manifest and table here");
    ablate->add_flag("--pretty", o.pretty, "Human-readable table");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (synth->parsed()) return run_synth(o);
        if (train->parsed()) return run_train(o);
        if (eval->parsed()) return run_eval(o);
        if (generate->parsed()) return run_generate(o);
        if (score->parsed()) return run_score(o);
        if (ablate->parsed()) return run_ablate(o);
    } catch (const std::exception& e) {
        std::cerr << "ovc: error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
