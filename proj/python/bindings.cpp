#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "ovc/checkpoint.hpp"
#include "ovc/config.hpp"
#include "ovc/corpus.hpp"
#include "ovc/error.hpp"
#include "ovc/graph.hpp"
#include "ovc/metrics.hpp"
#include "ovc/synthgen.hpp"
#include "ovc/trainer.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace ovc;

namespace {

std::vector<metrics::ScoredPair> to_pairs(const std::vector<std::string>& candidates,
                                          const std::vector<std::vector<std::string>>& references) {
    if (candidates.size() != references.size()) {
        throw ValidationError("references", "one reference list per candidate is required");
    }
    std::vector<metrics::ScoredPair> pairs(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        pairs[i].candidate = corpus::tokenize(candidates[i]);
        for (const auto& r : references[i]) pairs[i].references.push_back(corpus::tokenize(r));
    }
    return pairs;
}

py::dict report_dict(const metrics::MetricReport& r) {
    py::dict d;
    d["b1"] = r.b1;
    d["b2"] = r.b2;
    d["b3"] = r.b3;
    d["b4"] = r.b4;
    d["meteor"] = r.meteor;
    d["rouge_l"] = r.rouge_l;
    d["cider_d"] = r.cider_d;
    return d;
}

py::list history_list(const std::vector<EpochLog>& history) {
    py::list out;
    for (const auto& e : history) {
        py::dict d;
        d["epoch"] = e.epoch;
        d["l_cap"] = e.l_cap;
        d["l_de"] = e.l_de;
        d["total"] = e.total;
        out.append(d);
    }
    return out;
}

const corpus::AnnotatedObject& find_or_throw(const std::vector<corpus::AnnotatedObject>& objects, const std::string& id) {
    const auto* o = corpus::find_object(objects, id);
    if (!o) throw ValidationError("object_id", "no object '" + id + "'");
    return *o;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Object-oriented video captioning core";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
    py::register_exception<ParseError>(m, "ParseError", base.ptr());
    py::register_exception<IoError>(m, "IoError", base.ptr());
    py::register_exception<DivergenceError>(m, "DivergenceError", base.ptr());

    m.def("tokenize", [](const std::string& text, std::size_t max_len) { return corpus::tokenize(text, max_len); },
          py::arg("text"), py::arg("max_len") = corpus::kMaxCaptionTokens);

    py::class_<corpus::Vocabulary>(m, "Vocabulary")
        .def_static("from_tokens", &corpus::Vocabulary::from_tokens)
        .def_static(
            "build",
            [](const std::vector<std::string>& captions, std::size_t min_count) {
                std::vector<corpus::Caption> cs;
                for (const auto& c : captions) cs.push_back(corpus::Caption::from_text(c));
                return corpus::build_vocabulary(cs, min_count);
            },
            py::arg("captions"), py::arg("min_count") = 1)
        .def("index", &corpus::Vocabulary::index)
        .def("token", &corpus::Vocabulary::token)
        .def("tokens", &corpus::Vocabulary::tokens)
        .def("__len__", &corpus::Vocabulary::size)
        .def("encode",
             [](const corpus::Vocabulary& v, const std::string& text) {
                 return corpus::encode(corpus::Caption::from_text(text), v);
             })
        .def("decode", [](const corpus::Vocabulary& v, const std::vector<int>& ids) { return corpus::decode(ids, v); });

    m.def("sample_frames", &graph::sample_frames, py::arg("m"), py::arg("nodes") = graph::kDefaultNodes);

    m.def(
        "score",
        [](const std::vector<std::string>& c, const std::vector<std::vector<std::string>>& r) {
            return report_dict(metrics::score_all(to_pairs(c, r)));
        },
        py::arg("candidates"), py::arg("references"));
    m.def("bleu", [](const std::vector<std::string>& c, const std::vector<std::vector<std::string>>& r) {
        return metrics::bleu(to_pairs(c, r));
    });
    m.def("cider_d", [](const std::vector<std::string>& c, const std::vector<std::vector<std::string>>& r) {
        return metrics::cider_d(to_pairs(c, r));
    });
    m.def("rouge_l", [](const std::string& c, const std::vector<std::string>& r) {
        return metrics::rouge_l(to_pairs({c}, {r})[0]);
    });
    m.def("meteor_lite", [](const std::string& c, const std::vector<std::string>& r) {
        return metrics::meteor_lite(to_pairs({c}, {r})[0]);
    });

    py::class_<TrainConfig> cfg(m, "TrainConfig");
    cfg.def(py::init<>())
        .def_static("parse", &parse_config)
        .def_static("load", [](const fs::path& p) { return load_config(p); })
        .def("to_text", [](const TrainConfig& c) { return to_text(c); })
        .def("validate", &TrainConfig::validate)
        .def("__eq__", [](const TrainConfig& a, const TrainConfig& b) { return a == b; });
#define OVC_FIELD(name) cfg.def_readwrite(#name, &TrainConfig::name);
    OVC_FIELD(learning_rate)
    OVC_FIELD(beta1)
    OVC_FIELD(beta2)
    OVC_FIELD(eps)
    OVC_FIELD(batch_size)
    OVC_FIELD(epochs)
    OVC_FIELD(lambda)
    OVC_FIELD(t_s)
    OVC_FIELD(use_global)
    OVC_FIELD(use_local)
    OVC_FIELD(use_color)
    OVC_FIELD(use_spatial)
    OVC_FIELD(use_de)
    OVC_FIELD(seed)
    OVC_FIELD(grad_clip)
    OVC_FIELD(feature_dim)
    OVC_FIELD(extractor)
    OVC_FIELD(embed_dim)
    OVC_FIELD(hidden_dim)
    OVC_FIELD(gru_layers)
    OVC_FIELD(attention_dim)
    OVC_FIELD(enhancer_hidden1)
    OVC_FIELD(enhancer_hidden2)
    OVC_FIELD(precision)
    OVC_FIELD(min_count)
    OVC_FIELD(max_len)
    OVC_FIELD(beam_width)
#undef OVC_FIELD

    m.def(
        "synthesize",
        [](const std::string& spec_json, const fs::path& out) {
            const auto corpus = synth::generate_corpus(synth::parse_corpus_spec(spec_json));
            synth::write_corpus(corpus, out);
            py::dict d;
            d["train_objects"] = corpus.train.size();
            d["test_objects"] = corpus.test.size();
            d["videos"] = corpus.videos.size();
            return d;
        },
        py::arg("spec_json"), py::arg("out"));

    py::class_<Checkpoint>(m, "Checkpoint")
        .def_readonly("config", &Checkpoint::config)
        .def_readonly("vocab", &Checkpoint::vocab)
        .def_readonly("epoch", &Checkpoint::epoch)
        .def_property_readonly("history", [](const Checkpoint& c) { return history_list(c.history); })
        .def("save", [](const Checkpoint& c, const fs::path& p) { save_checkpoint(c, p); })
        .def("to_bytes", [](const Checkpoint& c) { return py::bytes(serialize_checkpoint(c)); });
    m.def("load_checkpoint", [](const fs::path& p) { return load_checkpoint(p); });

    m.def(
        "train",
        [](const TrainConfig& config, const fs::path& data) {
            const auto objects = corpus::load_dataset(data / "train.jsonl");
            trainer::DirectoryFrames frames(data);
            py::gil_scoped_release release;
            return trainer::train(config, objects, frames);
        },
        py::arg("config"), py::arg("data"));

    m.def(
        "evaluate",
        [](const Checkpoint& ck, const fs::path& data, const std::string& split) {
            const auto objects = corpus::load_dataset(data / (split + ".jsonl"));
            trainer::DirectoryFrames frames(data);
            const auto report = trainer::evaluate(ck, objects, frames);
            py::dict d = report_dict(report.metrics);
            d["de_accuracy"] = report.de_accuracy;
            d["objects"] = report.objects;
            py::list caps;
            for (const auto& c : report.captions) caps.append(py::make_tuple(c.object_id, c.caption, c.reference));
            d["captions"] = caps;
            return d;
        },
        py::arg("checkpoint"), py::arg("data"), py::arg("split") = "test");

    m.def(
        "caption",
        [](const Checkpoint& ck, const fs::path& data, const std::string& object_id, const std::string& split) {
            const auto objects = corpus::load_dataset(data / (split + ".jsonl"));
            trainer::DirectoryFrames frames(data);
            return trainer::Captioner(ck).caption(find_or_throw(objects, object_id), frames).raw;
        },
        py::arg("checkpoint"), py::arg("data"), py::arg("object_id"), py::arg("split") = "test");
}
