#include "ovc/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

#include <json.hpp>

#include "ovc/error.hpp"

namespace ovc {

void validate(const Trajectory& t) {
    if (t.frame_size.width <= 0 || t.frame_size.height <= 0) {
        throw ValidationError("frame_size", "width and height must be positive");
    }
    if (t.timestamps.empty()) throw ValidationError("frames", "trajectory has no frames");
    if (t.timestamps.size() != t.boxes.size()) {
        throw ValidationError("boxes", "expected one box per frame (" + std::to_string(t.timestamps.size()) +
                                           " frames, " + std::to_string(t.boxes.size()) + " boxes)");
    }
    for (std::size_t i = 0; i < t.timestamps.size(); ++i) {
        if (t.timestamps[i] < 0) throw ValidationError("frames", "negative frame index");
        if (i > 0 && t.timestamps[i] <= t.timestamps[i - 1]) {
            throw ValidationError("frames", "frame indices must be strictly increasing");
        }
        if (!box_inside(t.boxes[i], t.frame_size)) {
            throw ValidationError("box", "box " + std::to_string(i) + " at frame " + std::to_string(t.timestamps[i]) +
                                             " lies outside the frame");
        }
    }
}

}  // namespace ovc

namespace ovc::corpus {

using ordered_json = nlohmann::ordered_json;

std::string_view to_string(SuperClass c) {
    switch (c) {
        case SuperClass::male:
            return "male";
        case SuperClass::female:
            return "female";
        case SuperClass::vehicle:
            return "vehicle";
        case SuperClass::animal:
            return "animal";
    }
    return "male";
}

SuperClass parse_super_class(std::string_view name) {
    for (std::size_t i = 0; i < kNumClasses; ++i) {
        if (to_string(static_cast<SuperClass>(i)) == name) return static_cast<SuperClass>(i);
    }
    throw ValidationError("super_class", "unknown class '" + std::string(name) + "'");
}

std::vector<std::string> tokenize(std::string_view raw, std::size_t max_len) {
    std::vector<std::string> tokens;
    std::string current;
    auto flush = [&] {
        if (!current.empty() && tokens.size() < max_len) tokens.push_back(current);
        current.clear();
    };
    for (const char ch : raw) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isspace(c)) {
            flush();
        } else if (c >= 0x80 || std::isalnum(c)) {
            current.push_back(static_cast<char>(std::tolower(c)));
        }
        // ASCII punctuation is dropped without splitting the word.
    }
    flush();
    return tokens;
}

Caption Caption::from_text(std::string raw) {
    Caption c;
    c.tokens = tokenize(raw);
    c.raw = std::move(raw);
    return c;
}

Vocabulary::Vocabulary() {
    for (const auto token : kReserved) {
        index_.emplace(std::string(token), static_cast<int>(tokens_.size()));
        tokens_.emplace_back(token);
    }
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
    if (tokens.size() < kReserved.size() || !std::equal(kReserved.begin(), kReserved.end(), tokens.begin())) {
        throw ValidationError("vocabulary", "reserved tokens missing or out of place");
    }
    Vocabulary v;
    for (std::size_t i = kReserved.size(); i < tokens.size(); ++i) {
        if (!v.index_.emplace(tokens[i], static_cast<int>(i)).second) {
            throw ValidationError("vocabulary", "duplicate token '" + tokens[i] + "'");
        }
        v.tokens_.push_back(std::move(tokens[i]));
    }
    return v;
}

int Vocabulary::index(std::string_view token) const {
    const auto it = index_.find(std::string(token));
    return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return index_.contains(std::string(token)); }

const std::string& Vocabulary::token(int i) const {
    if (i < 0 || static_cast<std::size_t>(i) >= tokens_.size()) {
        throw ValidationError("token index", std::to_string(i) + " out of range");
    }
    return tokens_[static_cast<std::size_t>(i)];
}

Vocabulary build_vocabulary(std::span<const Caption> captions, std::size_t min_count) {
    if (captions.empty()) throw Error("cannot build a vocabulary from an empty training set");
    std::map<std::string, std::size_t> counts;
    for (const auto& caption : captions) {
        for (const auto& token : caption.tokens) ++counts[token];
    }
    std::vector<std::pair<std::string, std::size_t>> kept;
    for (auto& [token, count] : counts) {
        if (count >= min_count) kept.emplace_back(token, count);
    }
    std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> tokens(Vocabulary::kReserved.begin(), Vocabulary::kReserved.end());
    for (auto& entry : kept) tokens.push_back(std::move(entry.first));
    return Vocabulary::from_tokens(std::move(tokens));
}

std::vector<int> encode(std::span<const std::string> tokens, const Vocabulary& vocab) {
    std::vector<int> out;
    out.reserve(tokens.size() + 2);
    out.push_back(Vocabulary::kBos);
    for (const auto& token : tokens) out.push_back(vocab.index(token));
    out.push_back(Vocabulary::kEos);
    return out;
}

std::vector<int> encode(const Caption& caption, const Vocabulary& vocab) { return encode(caption.tokens, vocab); }

std::vector<std::string> decode(std::span<const int> indices, const Vocabulary& vocab) {
    std::vector<std::string> out;
    for (const int i : indices) {
        if (i == Vocabulary::kEos) break;
        if (i == Vocabulary::kPad || i == Vocabulary::kBos) continue;
        out.push_back(vocab.token(i));
    }
    return out;
}

std::string join(std::span<const std::string> tokens) {
    std::string out;
    for (const auto& t : tokens) {
        if (!out.empty()) out.push_back(' ');
        out += t;
    }
    return out;
}

std::string to_json_line(const AnnotatedObject& object) {
    ordered_json j;
    j["object_id"] = object.object_id;
    j["super_class"] = std::string(to_string(object.super_class));
    j["caption"] = object.caption.raw;
    j["frames"] = object.trajectory.timestamps;
    auto boxes = ordered_json::array();
    for (const auto& b : object.trajectory.boxes) boxes.push_back({b.x, b.y, b.w, b.h});
    j["boxes"] = std::move(boxes);
    j["frame_size"] = {object.trajectory.frame_size.width, object.trajectory.frame_size.height};
    j["video_id"] = object.video_id;
    return j.dump();
}

namespace {

const ordered_json& require(const ordered_json& j, const char* field) {
    const auto it = j.find(field);
    if (it == j.end()) throw ValidationError(field, "missing field");
    return *it;
}

std::string require_string(const ordered_json& j, const char* field) {
    const auto& v = require(j, field);
    if (!v.is_string()) throw ValidationError(field, "expected a string");
    return v.get<std::string>();
}

int require_int(const ordered_json& v, const char* field) {
    if (!v.is_number_integer()) throw ValidationError(field, "expected an integer");
    return v.get<int>();
}

}  // namespace

AnnotatedObject from_json_line(std::string_view line) {
    ordered_json j;
    try {
        j = ordered_json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("json", e.what());
    }
    if (!j.is_object()) throw ValidationError("json", "expected an object");

    AnnotatedObject o;
    o.object_id = require_string(j, "object_id");
    o.video_id = require_string(j, "video_id");
    o.super_class = parse_super_class(require_string(j, "super_class"));
    o.caption = Caption::from_text(require_string(j, "caption"));

    const auto& frames = require(j, "frames");
    if (!frames.is_array()) throw ValidationError("frames", "expected an array");
    for (const auto& f : frames) o.trajectory.timestamps.push_back(require_int(f, "frames"));

    const auto& boxes = require(j, "boxes");
    if (!boxes.is_array()) throw ValidationError("boxes", "expected an array");
    for (const auto& b : boxes) {
        if (!b.is_array() || b.size() != 4) {
            throw ValidationError("box", "each box must be [x,y,w,h] with 4 elements, got " + b.dump());
        }
        o.trajectory.boxes.push_back(
            {require_int(b[0], "box"), require_int(b[1], "box"), require_int(b[2], "box"), require_int(b[3], "box")});
    }

    const auto& size = require(j, "frame_size");
    if (!size.is_array() || size.size() != 2) throw ValidationError("frame_size", "expected [W,H]");
    o.trajectory.frame_size = {require_int(size[0], "frame_size"), require_int(size[1], "frame_size")};
    o.trajectory.object_id = o.object_id;
    validate(o.trajectory);
    return o;
}

std::vector<AnnotatedObject> load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset " + path.string());
    std::vector<AnnotatedObject> objects;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.empty()) continue;
        try {
            objects.push_back(from_json_line(line));
        } catch (const ValidationError& e) {
            throw ValidationError(e.field(), path.string() + " line " + std::to_string(number) + ": " + e.what());
        }
    }
    return objects;
}

void save_dataset(std::span<const AnnotatedObject> objects, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    for (const auto& o : objects) out << to_json_line(o) << '\n';
    if (!out) throw IoError("failed writing " + path.string());
}

const AnnotatedObject* find_object(std::span<const AnnotatedObject> objects, std::string_view object_id) {
    for (const auto& o : objects) {
        if (o.object_id == object_id) return &o;
    }
    return nullptr;
}

}  // namespace ovc::corpus
