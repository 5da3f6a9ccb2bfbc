#include "ovc/synthgen.hpp"

#include <algorithm>
#include <filesystem>

#include <json.hpp>

#include "ovc/error.hpp"

namespace ovc::synth {

using corpus::SuperClass;

namespace {

constexpr std::array<std::string_view, kNumColors> kColorNames = {"red",  "green",   "blue",   "yellow",
                                                                  "cyan", "magenta", "orange", "purple"};
constexpr std::array<Rgb, kNumColors> kPalette = {{{255, 0, 0},
                                                   {0, 255, 0},
                                                   {0, 0, 255},
                                                   {255, 255, 0},
                                                   {0, 255, 255},
                                                   {255, 0, 255},
                                                   {255, 160, 0},
                                                   {160, 0, 255}}};
constexpr std::array<std::string_view, 3> kShapeNames = {"square", "circle", "triangle"};
constexpr std::array<std::string_view, kNumMotions> kMotionNames = {
    "static", "move_right", "move_left", "move_up", "move_down", "jump", "zigzag"};
constexpr std::array<std::string_view, kNumMotions> kActivityPhrases = {
    "stands still", "moves to the right", "moves to the left", "goes up", "goes down", "jumps", "runs in a zigzag"};
constexpr std::array<std::string_view, kNumMotions> kActivityWords = {"still", "right", "left", "up",
                                                                      "down",  "jumps", "zigzag"};

constexpr Rgb kMaleMark{0, 0, 0};
constexpr Rgb kFemaleMark{255, 255, 255};
constexpr Rgb kTrail{128, 128, 128};
constexpr int kTrailWidth = 2;

template <typename Enum, std::size_t N>
Enum parse_name(const std::array<std::string_view, N>& names, std::string_view name, const char* field) {
    for (std::size_t i = 0; i < N; ++i) {
        if (names[i] == name) return static_cast<Enum>(i);
    }
    throw ValidationError(field, "unknown value '" + std::string(name) + "'");
}

/// Triangle wave in [0, amp] with the given period.
int tri(int k, int amp, int period) {
    const int half = period / 2;
    const int p = k % period;
    return p <= half ? amp * p / half : amp * (period - p) / half;
}

struct Offset {
    int dx = 0;
    int dy = 0;
};

Offset motion_offset(Motion m, int k, int speed) {
    switch (m) {
        case Motion::still:
            return {};
        case Motion::move_right:
            return {speed * k, 0};
        case Motion::move_left:
            return {-speed * k, 0};
        case Motion::move_up:
            return {0, -speed * k};
        case Motion::move_down:
            return {0, speed * k};
        case Motion::jump:
            return {0, -tri(k, 6, 8)};
        case Motion::zigzag:
            return {tri(k, 8, 16), tri(k, 2, 4)};
    }
    return {};
}

bool inside_shape(Shape shape, int px, int py, int w, int h) {
    const double fx = px + 0.5;
    const double fy = py + 0.5;
    switch (shape) {
        case Shape::square:
            return true;
        case Shape::circle: {
            const double nx = (fx - w / 2.0) / (w / 2.0);
            const double ny = (fy - h / 2.0) / (h / 2.0);
            return nx * nx + ny * ny <= 1.0;
        }
        case Shape::triangle: {
            const double half_width = fy / h * (w / 2.0);
            return std::abs(fx - w / 2.0) <= half_width;
        }
    }
    return false;
}

std::uint8_t clamp_byte(int v) { return static_cast<std::uint8_t>(std::clamp(v, 0, 255)); }

Raster render_background(FrameSize size, std::uint64_t seed) {
    Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
    const int jr = rng.range(-8, 8);
    const int jg = rng.range(-8, 8);
    const int jb = rng.range(-8, 8);
    Raster frame(size.width, size.height);
    const int wx = std::max(1, size.width - 1);
    for (int y = 0; y < size.height; ++y) {
        for (int x = 0; x < size.width; ++x) {
            // Stays within histogram bins 4..8, away from every palette value.
            frame.set(x, y, clamp_byte(72 + 56 * x / wx + jr), clamp_byte(100 + jg), clamp_byte(104 + jb));
        }
    }
    return frame;
}

/// The trailing edge of a moving object is drawn as a gray band opposite its velocity.
void draw_object(Raster& frame, const ObjectProgram& program, const Box& box, Offset velocity) {
    const Rgb body = palette(program.color);
    const bool human = program.super_class == SuperClass::male || program.super_class == SuperClass::female;
    const Rgb mark = program.super_class == SuperClass::male ? kMaleMark : kFemaleMark;
    const int mark_rows = std::max(1, box.h / 4);
    const int mark_top = velocity.dy > 0 ? kTrailWidth : 0;
    for (int py = 0; py < box.h; ++py) {
        for (int px = 0; px < box.w; ++px) {
            const bool trail = (velocity.dx > 0 && px < kTrailWidth) || (velocity.dx < 0 && px >= box.w - kTrailWidth) ||
                               (velocity.dy > 0 && py < kTrailWidth) || (velocity.dy < 0 && py >= box.h - kTrailWidth);
            if (trail) {
                frame.set(box.x + px, box.y + py, kTrail.r, kTrail.g, kTrail.b);
                continue;
            }
            if (!inside_shape(program.shape, px, py, box.w, box.h)) continue;
            const Rgb c = human && py >= mark_top && py < mark_top + mark_rows ? mark : body;
            frame.set(box.x + px, box.y + py, c.r, c.g, c.b);
        }
    }
}

bool boxes_overlap(const Box& a, const Box& b) {
    return a.x < b.x + b.w && b.x < a.x + a.w && a.y < b.y + b.h && b.y < a.y + a.h;
}

bool programs_collide(const ObjectProgram& a, const ObjectProgram& b) {
    const int lo = std::max(a.first_frame, b.first_frame);
    const int hi = std::min(a.last_frame, b.last_frame);
    for (int f = lo; f <= hi; ++f) {
        if (boxes_overlap(box_at(a, f), box_at(b, f))) return true;
    }
    return false;
}

void validate_program(const ObjectProgram& p, const SceneSpec& spec, std::size_t index) {
    const std::string where = "objects[" + std::to_string(index) + "]";
    if (p.first_frame < 0 || p.last_frame < p.first_frame || p.last_frame >= spec.num_frames) {
        throw ValidationError(where + ".visible_range", "must lie within [0, " + std::to_string(spec.num_frames - 1) + "]");
    }
    if (p.speed < 0) throw ValidationError(where + ".speed", "must be non-negative");
    for (int f = p.first_frame; f <= p.last_frame; ++f) {
        if (!box_inside(box_at(p, f), spec.frame_size)) {
            throw ValidationError(where + ".motion", std::string(motion_name(p.motion)) + " leaves the frame at frame " +
                                                         std::to_string(f));
        }
    }
}

}  // namespace

Rgb palette(Color c) { return kPalette[static_cast<std::size_t>(c)]; }
std::string_view color_name(Color c) { return kColorNames[static_cast<std::size_t>(c)]; }
std::string_view shape_name(Shape s) { return kShapeNames[static_cast<std::size_t>(s)]; }
std::string_view motion_name(Motion m) { return kMotionNames[static_cast<std::size_t>(m)]; }
Color parse_color(std::string_view name) { return parse_name<Color>(kColorNames, name, "color"); }
Shape parse_shape(std::string_view name) { return parse_name<Shape>(kShapeNames, name, "shape"); }
Motion parse_motion(std::string_view name) { return parse_name<Motion>(kMotionNames, name, "motion"); }
std::string_view activity_word(Motion m) { return kActivityWords[static_cast<std::size_t>(m)]; }

std::string_view class_word(SuperClass c) {
    switch (c) {
        case SuperClass::male:
            return "man";
        case SuperClass::female:
            return "woman";
        case SuperClass::vehicle:
            return "car";
        case SuperClass::animal:
            return "dog";
    }
    return "man";
}

Box box_at(const ObjectProgram& program, int frame) {
    const Offset o = motion_offset(program.motion, frame - program.first_frame, program.speed);
    return {program.start_box.x + o.dx, program.start_box.y + o.dy, program.start_box.w, program.start_box.h};
}

void validate(const SceneSpec& spec) {
    if (spec.num_frames < 1) throw ValidationError("num_frames", "must be at least 1");
    if (spec.frame_size.width < 16 || spec.frame_size.height < 16) {
        throw ValidationError("frame_size", "width and height must be at least 16");
    }
    if (spec.objects.empty() || spec.objects.size() > 8) {
        throw ValidationError("objects", "a scene holds between 1 and 8 objects");
    }
    for (std::size_t i = 0; i < spec.objects.size(); ++i) validate_program(spec.objects[i], spec, i);
    if (spec.id_switch) {
        const auto& s = *spec.id_switch;
        if (s.first >= spec.objects.size() || s.second >= spec.objects.size() || s.first == s.second) {
            throw ValidationError("id_switch", "must name two distinct objects");
        }
    }
}

corpus::Caption caption_from_program(const ObjectProgram& program, FrameSize frame_size) {
    long sum = 0;
    for (int f = program.first_frame; f <= program.last_frame; ++f) {
        const Box b = box_at(program, f);
        sum += 2L * b.y + b.h;  // twice the vertical center
    }
    const double center = static_cast<double>(sum) / (2.0 * (program.last_frame - program.first_frame + 1));
    std::string_view location = "in the middle";
    if (center < frame_size.height / 3.0) {
        location = "at the top";
    } else if (center >= 2.0 * frame_size.height / 3.0) {
        location = "at the bottom";
    }
    std::string raw = "the ";
    raw += color_name(program.color);
    raw += ' ';
    raw += class_word(program.super_class);
    raw += ' ';
    raw += kActivityPhrases[static_cast<std::size_t>(program.motion)];
    raw += ' ';
    raw += location;
    return corpus::Caption::from_text(std::move(raw));
}

Raster render_crop(const Raster& frame, const Box& box) { return crop(frame, box); }

Scene generate_scene(const SceneSpec& spec) {
    validate(spec);
    Scene scene;
    const Raster background = render_background(spec.frame_size, spec.seed);
    scene.frames.assign(static_cast<std::size_t>(spec.num_frames), background);
    for (int f = 0; f < spec.num_frames; ++f) {
        for (const auto& p : spec.objects) {
            if (f < p.first_frame || f > p.last_frame) continue;
            const Box now = box_at(p, f);
            const Box prev = f > p.first_frame ? box_at(p, f - 1) : now;
            const Box next = f > p.first_frame ? now : box_at(p, f + 1);
            draw_object(scene.frames[static_cast<std::size_t>(f)], p, now, {next.x - prev.x, next.y - prev.y});
        }
    }
    for (std::size_t i = 0; i < spec.objects.size(); ++i) {
        const auto& p = spec.objects[i];
        corpus::AnnotatedObject o;
        o.object_id = spec.video_id + "_o" + std::to_string(i);
        o.video_id = spec.video_id;
        o.super_class = p.super_class;
        o.caption = caption_from_program(p, spec.frame_size);
        o.trajectory.object_id = o.object_id;
        o.trajectory.frame_size = spec.frame_size;
        for (int f = p.first_frame; f <= p.last_frame; ++f) {
            o.trajectory.timestamps.push_back(f);
            o.trajectory.boxes.push_back(box_at(p, f));
        }
        scene.objects.push_back(std::move(o));
    }
    if (spec.id_switch) {
        auto& a = scene.objects[spec.id_switch->first].trajectory;
        auto& b = scene.objects[spec.id_switch->second].trajectory;
        const int frame = spec.id_switch->frame;
        auto split = [frame](const Trajectory& t) {
            return static_cast<std::size_t>(std::lower_bound(t.timestamps.begin(), t.timestamps.end(), frame) -
                                            t.timestamps.begin());
        };
        const std::size_t sa = split(a);
        const std::size_t sb = split(b);
        Trajectory na = a;
        Trajectory nb = b;
        na.timestamps.assign(a.timestamps.begin(), a.timestamps.begin() + static_cast<std::ptrdiff_t>(sa));
        na.boxes.assign(a.boxes.begin(), a.boxes.begin() + static_cast<std::ptrdiff_t>(sa));
        na.timestamps.insert(na.timestamps.end(), b.timestamps.begin() + static_cast<std::ptrdiff_t>(sb), b.timestamps.end());
        na.boxes.insert(na.boxes.end(), b.boxes.begin() + static_cast<std::ptrdiff_t>(sb), b.boxes.end());
        nb.timestamps.assign(b.timestamps.begin(), b.timestamps.begin() + static_cast<std::ptrdiff_t>(sb));
        nb.boxes.assign(b.boxes.begin(), b.boxes.begin() + static_cast<std::ptrdiff_t>(sb));
        nb.timestamps.insert(nb.timestamps.end(), a.timestamps.begin() + static_cast<std::ptrdiff_t>(sa), a.timestamps.end());
        nb.boxes.insert(nb.boxes.end(), a.boxes.begin() + static_cast<std::ptrdiff_t>(sa), a.boxes.end());
        if (na.timestamps.empty() || nb.timestamps.empty()) {
            throw ValidationError("id_switch", "switch would leave a trajectory empty");
        }
        a = std::move(na);
        b = std::move(nb);
    }
    return scene;
}

std::optional<Color> dominant_color(std::span<const double> histogram) {
    if (histogram.size() != 48) throw ValidationError("histogram", "expected 48 bins");
    std::optional<Color> best;
    double best_score = 0.0;
    for (std::size_t i = 0; i < kNumColors; ++i) {
        const Rgb c = kPalette[i];
        const double score = std::min({histogram[c.r / 16], histogram[16 + c.g / 16], histogram[32 + c.b / 16]});
        if (score > best_score) {
            best_score = score;
            best = static_cast<Color>(i);
        }
    }
    return best;
}

SceneSpec sample_scene_spec(const SceneOptions& options, std::uint64_t seed, std::string video_id) {
    Rng rng(seed);
    SceneSpec spec;
    spec.frame_size = options.frame_size;
    spec.num_frames = options.num_frames;
    spec.seed = seed;
    spec.video_id = std::move(video_id);
    const int wanted = rng.range(options.min_objects, options.max_objects);
    for (int attempt = 0; attempt < 200 && static_cast<int>(spec.objects.size()) < wanted; ++attempt) {
        ObjectProgram p;
        p.super_class = static_cast<SuperClass>(rng.below(corpus::kNumClasses));
        switch (p.super_class) {
            case SuperClass::vehicle:
                p.shape = Shape::square;
                break;
            case SuperClass::animal:
                p.shape = Shape::triangle;
                break;
            default:
                p.shape = Shape::circle;
        }
        p.color = static_cast<Color>(rng.below(kNumColors));
        p.motion = static_cast<Motion>(rng.below(kNumMotions));
        const int length = rng.range(std::max(1, options.num_frames / 2), options.num_frames);
        p.first_frame = rng.range(0, options.num_frames - length);
        p.last_frame = p.first_frame + length - 1;
        p.start_box.w = rng.range(options.min_box, options.max_box);
        p.start_box.h = rng.range(options.min_box, options.max_box);
        int min_dx = 0, max_dx = 0, min_dy = 0, max_dy = 0;
        for (int k = 0; k < length; ++k) {
            const Offset o = motion_offset(p.motion, k, p.speed);
            min_dx = std::min(min_dx, o.dx);
            max_dx = std::max(max_dx, o.dx);
            min_dy = std::min(min_dy, o.dy);
            max_dy = std::max(max_dy, o.dy);
        }
        const int x_hi = options.frame_size.width - p.start_box.w - max_dx;
        const int y_hi = options.frame_size.height - p.start_box.h - max_dy;
        if (x_hi < -min_dx || y_hi < -min_dy) continue;
        p.start_box.x = rng.range(-min_dx, x_hi);
        p.start_box.y = rng.range(-min_dy, y_hi);
        const bool collides = std::any_of(spec.objects.begin(), spec.objects.end(),
                                          [&](const ObjectProgram& other) { return programs_collide(p, other); });
        if (!collides) spec.objects.push_back(p);
    }
    if (spec.objects.empty()) throw Error("could not place any object in scene " + spec.video_id);
    return spec;
}

namespace {

std::uint64_t scene_seed(std::uint64_t base, std::uint64_t index, bool test) {
    return (base << 32) + 2 * index + (test ? 1 : 0);
}

std::string video_name(std::uint64_t seed) { return "s" + std::to_string(seed); }

}  // namespace

Corpus generate_corpus(const CorpusSpec& spec) {
    Corpus out;
    auto add_scene = [&out](const SceneSpec& scene_spec, std::size_t budget_train, std::size_t budget_test) {
        Scene scene = generate_scene(scene_spec);
        auto& split = scene_spec.seed % 2 == 0 ? out.train : out.test;
        const std::size_t budget = scene_spec.seed % 2 == 0 ? budget_train : budget_test;
        for (auto& o : scene.objects) {
            if (split.size() >= budget) break;
            split.push_back(std::move(o));
        }
        out.videos.emplace_back(scene_spec.video_id, std::move(scene.frames));
    };
    if (!spec.scenes.empty()) {
        for (const auto& s : spec.scenes) add_scene(s, SIZE_MAX, SIZE_MAX);
        return out;
    }
    for (std::uint64_t i = 0; out.train.size() < spec.train_objects; ++i) {
        const auto seed = scene_seed(spec.seed, i, false);
        add_scene(sample_scene_spec(spec.scene, seed, video_name(seed)), spec.train_objects, 0);
    }
    for (std::uint64_t i = 0; out.test.size() < spec.test_objects; ++i) {
        const auto seed = scene_seed(spec.seed, i, true);
        add_scene(sample_scene_spec(spec.scene, seed, video_name(seed)), 0, spec.test_objects);
    }
    return out;
}

namespace {

using nlohmann::json;

Box parse_box(const json& j) {
    if (!j.is_array() || j.size() != 4) throw ValidationError("start_box", "expected [x,y,w,h]");
    return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
}

FrameSize parse_size(const json& j) {
    if (!j.is_array() || j.size() != 2) throw ValidationError("frame_size", "expected [W,H]");
    return {j[0].get<int>(), j[1].get<int>()};
}

SceneSpec parse_scene(const json& j, std::size_t index) {
    SceneSpec s;
    s.frame_size = parse_size(j.value("frame_size", json::array({64, 64})));
    s.num_frames = j.value("num_frames", 24);
    s.seed = j.value("seed", static_cast<std::uint64_t>(index));
    s.video_id = j.value("video_id", video_name(s.seed));
    for (const auto& o : j.at("objects")) {
        ObjectProgram p;
        p.shape = parse_shape(o.at("shape").get<std::string>());
        p.color = parse_color(o.at("color").get<std::string>());
        p.super_class = corpus::parse_super_class(o.at("super_class").get<std::string>());
        p.motion = parse_motion(o.at("motion").get<std::string>());
        p.start_box = parse_box(o.at("start_box"));
        const auto& range = o.value("visible_range", json::array({0, s.num_frames - 1}));
        p.first_frame = range.at(0).get<int>();
        p.last_frame = range.at(1).get<int>();
        p.speed = o.value("speed", 1);
        s.objects.push_back(p);
    }
    if (j.contains("id_switch")) {
        const auto& sw = j["id_switch"];
        s.id_switch = IdSwitch{sw.at("first").get<std::size_t>(), sw.at("second").get<std::size_t>(),
                               sw.at("frame").get<int>()};
    }
    return s;
}

}  // namespace

CorpusSpec parse_corpus_spec(std::string_view json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ValidationError("spec", e.what());
    }
    CorpusSpec spec;
    try {
        spec.seed = j.value("seed", spec.seed);
        spec.train_objects = j.value("train_objects", spec.train_objects);
        spec.test_objects = j.value("test_objects", spec.test_objects);
        if (j.contains("frame_size")) spec.scene.frame_size = parse_size(j["frame_size"]);
        spec.scene.num_frames = j.value("num_frames", spec.scene.num_frames);
        spec.scene.min_objects = j.value("min_objects", spec.scene.min_objects);
        spec.scene.max_objects = j.value("max_objects", spec.scene.max_objects);
        spec.scene.min_box = j.value("min_box", spec.scene.min_box);
        spec.scene.max_box = j.value("max_box", spec.scene.max_box);
        if (j.contains("scenes")) {
            std::size_t i = 0;
            for (const auto& s : j["scenes"]) spec.scenes.push_back(parse_scene(s, i++));
        }
    } catch (const json::exception& e) {
        throw ValidationError("spec", e.what());
    }
    if (spec.scene.min_objects < 1 || spec.scene.max_objects > 8 || spec.scene.min_objects > spec.scene.max_objects) {
        throw ValidationError("min_objects/max_objects", "must satisfy 1 <= min <= max <= 8");
    }
    if (spec.scene.min_box < 8 || spec.scene.min_box > spec.scene.max_box) {
        throw ValidationError("min_box/max_box", "crops must be at least 8x8 and min <= max");
    }
    return spec;
}

void write_corpus(const Corpus& c, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "frames");
    corpus::save_dataset(c.train, dir / "train.jsonl");
    corpus::save_dataset(c.test, dir / "test.jsonl");
    for (const auto& [id, frames] : c.videos) write_video(frames, dir / "frames" / (id + ".ovcr"));
}

}  // namespace ovc::synth
