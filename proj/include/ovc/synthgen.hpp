#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ovc/corpus.hpp"
#include "ovc/raster.hpp"
#include "ovc/rng.hpp"

namespace ovc::synth {

enum class Shape { square, circle, triangle };
enum class Motion { still, move_right, move_left, move_up, move_down, jump, zigzag };
enum class Color { red, green, blue, yellow, cyan, magenta, orange, purple };

inline constexpr std::size_t kNumColors = 8;
inline constexpr std::size_t kNumMotions = 7;

struct Rgb {
    std::uint8_t r, g, b;
    bool operator==(const Rgb&) const = default;
};

Rgb palette(Color c);
std::string_view color_name(Color c);
std::string_view shape_name(Shape s);
std::string_view motion_name(Motion m);
Color parse_color(std::string_view name);
Shape parse_shape(std::string_view name);
Motion parse_motion(std::string_view name);

/// Noun used in captions for each super-class.
std::string_view class_word(corpus::SuperClass c);
/// Word that identifies a motion in its caption phrase.
std::string_view activity_word(Motion m);

struct ObjectProgram {
    Shape shape = Shape::square;
    Color color = Color::red;
    corpus::SuperClass super_class = corpus::SuperClass::vehicle;
    Motion motion = Motion::still;
    Box start_box;
    int first_frame = 0;  ///< inclusive
    int last_frame = 0;   ///< inclusive
    int speed = 1;        ///< pixels per frame for linear motions
};

/// Swaps the trajectory tails of two objects from `frame` on, emulating a
/// tracker identity switch. Captions stay with the original objects.
struct IdSwitch {
    std::size_t first = 0;
    std::size_t second = 1;
    int frame = 0;
};

struct SceneSpec {
    FrameSize frame_size{64, 64};
    int num_frames = 24;
    std::vector<ObjectProgram> objects;
    std::uint64_t seed = 0;
    std::string video_id;
    std::optional<IdSwitch> id_switch;
};

struct Scene {
    Video frames;
    std::vector<corpus::AnnotatedObject> objects;
};

/// Box of the object at an absolute frame inside its visible range.
Box box_at(const ObjectProgram& program, int frame);

/// Throws ValidationError if any invariant of the spec is violated,
/// including motions that leave the frame.
void validate(const SceneSpec& spec);

Scene generate_scene(const SceneSpec& spec);

/// "the <color> <class-word> <activity-phrase> <location-phrase>"; the
/// location is taken from the mean vertical box center.
corpus::Caption caption_from_program(const ObjectProgram& program, FrameSize frame_size);

Raster render_crop(const Raster& frame, const Box& box);

/// Palette color whose per-channel histogram bins jointly carry the most
/// mass; nullopt for an all-zero histogram.
std::optional<Color> dominant_color(std::span<const double> histogram);

/// Parameters of randomly sampled scenes.
struct SceneOptions {
    FrameSize frame_size{64, 64};
    int num_frames = 24;
    int min_objects = 1;
    int max_objects = 3;
    int min_box = 12;
    int max_box = 18;
};

SceneSpec sample_scene_spec(const SceneOptions& options, std::uint64_t seed, std::string video_id);

struct CorpusSpec {
    std::uint64_t seed = 1;
    std::size_t train_objects = 200;
    std::size_t test_objects = 50;
    SceneOptions scene;
    /// When non-empty, used verbatim instead of sampling.
    std::vector<SceneSpec> scenes;
};

struct Corpus {
    std::vector<corpus::AnnotatedObject> train;
    std::vector<corpus::AnnotatedObject> test;
    std::vector<std::pair<std::string, Video>> videos;
};

/// Scenes with even seeds go to the train split and odd seeds to test.
Corpus generate_corpus(const CorpusSpec& spec);

CorpusSpec parse_corpus_spec(std::string_view json_text);

/// Writes train.jsonl, test.jsonl and frames/<video_id>.ovcr under dir.
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir);

}  // namespace ovc::synth
