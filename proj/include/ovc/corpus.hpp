#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ovc/trajectory.hpp"

namespace ovc::corpus {

inline constexpr std::size_t kMaxCaptionTokens = 25;

enum class SuperClass { male = 0, female = 1, vehicle = 2, animal = 3 };
inline constexpr std::size_t kNumClasses = 4;

std::string_view to_string(SuperClass c);
/// Throws ValidationError on an unknown name.
SuperClass parse_super_class(std::string_view name);

/// Strips punctuation, lower-cases ASCII letters, splits on whitespace and
/// keeps at most max_len tokens.
std::vector<std::string> tokenize(std::string_view raw, std::size_t max_len = kMaxCaptionTokens);

struct Caption {
    std::string raw;
    std::vector<std::string> tokens;

    static Caption from_text(std::string raw);

    bool operator==(const Caption&) const = default;
};

struct AnnotatedObject {
    std::string object_id;
    std::string video_id;
    SuperClass super_class = SuperClass::male;
    Trajectory trajectory;
    Caption caption;

    bool operator==(const AnnotatedObject&) const = default;
};

class Vocabulary {
  public:
    static constexpr int kPad = 0;
    static constexpr int kBos = 1;
    static constexpr int kEos = 2;
    static constexpr int kUnk = 3;
    static constexpr std::array<std::string_view, 4> kReserved = {"<pad>", "<bos>", "<eos>", "<unk>"};

    /// Vocabulary holding only the reserved tokens.
    Vocabulary();
    /// Rebuilds from an index-ordered token list whose first four entries are
    /// the reserved tokens.
    static Vocabulary from_tokens(std::vector<std::string> tokens);

    std::size_t size() const { return tokens_.size(); }
    int index(std::string_view token) const;  ///< kUnk when absent
    bool contains(std::string_view token) const;
    const std::string& token(int index) const;
    const std::vector<std::string>& tokens() const { return tokens_; }

    bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

  private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
};

/// Frequency-descending, then lexicographic. Throws Error on an empty corpus.
Vocabulary build_vocabulary(std::span<const Caption> captions, std::size_t min_count = 1);

/// [BOS] + token indices + [EOS].
std::vector<int> encode(const Caption& caption, const Vocabulary& vocab);
std::vector<int> encode(std::span<const std::string> tokens, const Vocabulary& vocab);
/// Drops PAD and BOS and stops at the first EOS.
std::vector<std::string> decode(std::span<const int> indices, const Vocabulary& vocab);

std::string join(std::span<const std::string> tokens);

/// One JSON Lines record, canonical key order.
std::string to_json_line(const AnnotatedObject& object);
/// Throws ValidationError on schema violations.
AnnotatedObject from_json_line(std::string_view line);

std::vector<AnnotatedObject> load_dataset(const std::filesystem::path& path);
void save_dataset(std::span<const AnnotatedObject> objects, const std::filesystem::path& path);

const AnnotatedObject* find_object(std::span<const AnnotatedObject> objects, std::string_view object_id);

}  // namespace ovc::corpus
