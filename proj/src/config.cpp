#include "ovc/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <variant>

#include "ovc/error.hpp"

namespace ovc {

namespace {

static_assert(std::is_same_v<std::size_t, std::uint64_t>, "seed shares the size_t field kind");
using Field = std::variant<double*, std::size_t*, int*, bool*, std::string*>;

std::vector<std::pair<std::string, Field>> fields(TrainConfig& c) {
    return {
        {"learning_rate", &c.learning_rate},
        {"beta1", &c.beta1},
        {"beta2", &c.beta2},
        {"eps", &c.eps},
        {"batch_size", &c.batch_size},
        {"epochs", &c.epochs},
        {"lambda", &c.lambda},
        {"t_s", &c.t_s},
        {"use_global", &c.use_global},
        {"use_local", &c.use_local},
        {"use_color", &c.use_color},
        {"use_spatial", &c.use_spatial},
        {"use_de", &c.use_de},
        {"seed", &c.seed},
        {"grad_clip", &c.grad_clip},
        {"feature_dim", &c.feature_dim},
        {"extractor", &c.extractor},
        {"embed_dim", &c.embed_dim},
        {"hidden_dim", &c.hidden_dim},
        {"gru_layers", &c.gru_layers},
        {"attention_dim", &c.attention_dim},
        {"enhancer_hidden1", &c.enhancer_hidden1},
        {"enhancer_hidden2", &c.enhancer_hidden2},
        {"precision", &c.precision},
        {"min_count", &c.min_count},
        {"max_len", &c.max_len},
        {"beam_width", &c.beam_width},
    };
}

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <typename N>
bool parse_number(std::string_view s, N& out) {
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc() && ptr == end;
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    std::string s(buf, ptr);
    if (s.find_first_of(".en") == std::string::npos) s += ".0";
    return s;
}

}  // namespace

void TrainConfig::validate() const {
    if (!(learning_rate > 0)) throw ValidationError("learning_rate", "must be positive");
    if (!(beta1 >= 0 && beta1 < 1)) throw ValidationError("beta1", "must lie in [0, 1)");
    if (!(beta2 >= 0 && beta2 < 1)) throw ValidationError("beta2", "must lie in [0, 1)");
    if (!(eps > 0)) throw ValidationError("eps", "must be positive");
    if (batch_size == 0) throw ValidationError("batch_size", "must be at least 1");
    if (!(lambda >= 0)) throw ValidationError("lambda", "must be non-negative");
    if (t_s == 0) throw ValidationError("t_s", "must be at least 1");
    if (!use_global && !use_local) throw ValidationError("use_global", "one of use_global/use_local must be enabled");
    if (!(grad_clip >= 0)) throw ValidationError("grad_clip", "must be non-negative");
    if (feature_dim < 1) throw ValidationError("feature_dim", "must be at least 1");
    if (extractor != "projection" && extractor != "conv") throw ValidationError("extractor", "unknown extractor " + extractor);
    if (embed_dim < 1) throw ValidationError("embed_dim", "must be at least 1");
    if (hidden_dim < 1) throw ValidationError("hidden_dim", "must be at least 1");
    if (gru_layers < 1) throw ValidationError("gru_layers", "must be at least 1");
    if (attention_dim < 1) throw ValidationError("attention_dim", "must be at least 1");
    if (enhancer_hidden1 < 1 || enhancer_hidden2 < 1) throw ValidationError("enhancer_hidden1", "must be at least 1");
    if (precision != "float32" && precision != "float64") throw ValidationError("precision", "expected float32 or float64");
    if (min_count == 0) throw ValidationError("min_count", "must be at least 1");
    if (max_len == 0) throw ValidationError("max_len", "must be at least 1");
    if (beam_width < 1) throw ValidationError("beam_width", "must be at least 1");
}

model::ModelDims TrainConfig::dims(int vocab) const {
    model::ModelDims d;
    d.feature_dim = feature_dim;
    d.vocab = vocab;
    d.embed = embed_dim;
    d.hidden = hidden_dim;
    d.layers = gru_layers;
    d.attention = attention_dim;
    d.enhancer_hidden1 = enhancer_hidden1;
    d.enhancer_hidden2 = enhancer_hidden2;
    return d;
}

TrainConfig parse_config(std::string_view text) {
    TrainConfig config;
    auto table = fields(config);
    std::map<std::string, Field, std::less<>> lookup(table.begin(), table.end());
    std::size_t line_no = 0;
    std::set<std::string, std::less<>> seen;
    std::istringstream in{std::string(text)};
    std::string raw;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string_view line = raw;
        bool quoted = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') quoted = !quoted;
            if (line[i] == '#' && !quoted) {
                line = line.substr(0, i);
                break;
            }
        }
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ParseError(line_no, "expected key = value");
        const std::string_view key = trim(line.substr(0, eq));
        const std::string_view value = trim(line.substr(eq + 1));
        const auto it = lookup.find(key);
        if (it == lookup.end()) throw ParseError(line_no, "unknown key '" + std::string(key) + "'");
        if (!seen.emplace(key).second) throw ParseError(line_no, "duplicate key '" + std::string(key) + "'");
        const bool ok = std::visit(
            [&](auto* target) {
                using V = std::remove_pointer_t<decltype(target)>;
                if constexpr (std::is_same_v<V, bool>) {
                    if (value == "true") return *target = true, true;
                    if (value == "false") return *target = false, true;
                    return false;
                } else if constexpr (std::is_same_v<V, std::string>) {
                    if (value.size() < 2 || value.front() != '"' || value.back() != '"') return false;
                    *target = std::string(value.substr(1, value.size() - 2));
                    return true;
                } else {
                    return parse_number(value, *target);
                }
            },
            it->second);
        if (!ok) throw ParseError(line_no, "bad value for '" + std::string(key) + "'");
    }
    config.validate();
    return config;
}

TrainConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string to_text(const TrainConfig& config) {
    TrainConfig copy = config;
    std::string out;
    for (const auto& [key, field] : fields(copy)) {
        out += key + " = ";
        std::visit(
            [&out](auto* v) {
                using V = std::remove_pointer_t<decltype(v)>;
                if constexpr (std::is_same_v<V, bool>) {
                    out += *v ? "true" : "false";
                } else if constexpr (std::is_same_v<V, std::string>) {
                    out += "\"" + *v + "\"";
                } else if constexpr (std::is_same_v<V, double>) {
                    out += format_double(*v);
                } else {
                    out += std::to_string(*v);
                }
            },
            field);
        out += "\n";
    }
    return out;
}

}  // namespace ovc
