#include "ovc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <unordered_map>

#include "ovc/error.hpp"

namespace ovc::metrics {

namespace {

constexpr int kMaxN = 4;
constexpr double kRougeBeta = 1.2;
constexpr double kCiderSigma = 6.0;
constexpr std::size_t kAlignStateBudget = 1u << 20;

std::size_t lcs(const Tokens& a, const Tokens& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

using Counts = std::map<std::string, std::size_t>;

struct CiderVector {
    std::array<std::map<std::string, double>, kMaxN> weights;
    std::array<double, kMaxN> norm{};
    std::size_t length = 0;
};

CiderVector cider_vector(const Tokens& tokens, const CiderIdf& idf) {
    CiderVector v;
    v.length = tokens.size();
    for (int n = 1; n <= kMaxN; ++n) {
        double sq = 0;
        for (const auto& [gram, count] : ngram_counts(tokens, static_cast<std::size_t>(n))) {
            const double w = static_cast<double>(count) * idf.idf(gram);
            v.weights[n - 1][gram] = w;
            sq += w * w;
        }
        v.norm[n - 1] = std::sqrt(sq);
    }
    return v;
}

double cider_similarity(const CiderVector& cand, const CiderVector& ref) {
    const double delta = static_cast<double>(cand.length) - static_cast<double>(ref.length);
    const double penalty = std::exp(-(delta * delta) / (2 * kCiderSigma * kCiderSigma));
    double total = 0;
    for (int n = 0; n < kMaxN; ++n) {
        double dot = 0;
        for (const auto& [gram, w] : cand.weights[n]) {
            const auto it = ref.weights[n].find(gram);
            if (it != ref.weights[n].end()) dot += std::min(w, it->second) * it->second;
        }
        if (cand.norm[n] != 0 && ref.norm[n] != 0) total += penalty * dot / (cand.norm[n] * ref.norm[n]);
    }
    return total / kMaxN;
}

// Memoized search over candidate positions. State: position, reference
// position of the previous match when the previous candidate token was
// matched, and the set of used reference positions.
class ChunkSearch {
  public:
    ChunkSearch(const Tokens& cand, const Tokens& ref) : cand_(cand), ref_(ref) {
        std::map<std::string, std::size_t> cc, rc;
        for (const auto& t : cand) ++cc[t];
        for (const auto& t : ref) ++rc[t];
        for (const auto& [w, c] : cc) {
            const auto it = rc.find(w);
            const std::size_t m = it == rc.end() ? 0 : std::min(c, it->second);
            need_[w] = m;
            matches_ += m;
        }
        remaining_in_cand_.resize(cand.size() + 1);
        std::map<std::string, std::size_t> seen;
        for (std::size_t i = cand.size(); i-- > 0;) {
            remaining_in_cand_[i] = seen[cand[i]]++;  // occurrences after i
        }
    }

    std::size_t matches() const { return matches_; }

    std::size_t min_chunks() {
        if (matches_ == 0) return 0;
        if (ref_.size() <= 64) {
            std::map<std::string, std::size_t> used;
            const std::size_t r = search(0, -1, 0, used);
            if (!exhausted_) return r;
        }
        return greedy();
    }

  private:
    std::size_t search(std::size_t i, int prev, std::uint64_t mask, std::map<std::string, std::size_t>& used) {
        if (i == cand_.size()) return 0;
        if (exhausted_) return kInf;
        const Key key{i, prev, mask};
        if (const auto it = memo_.find(key); it != memo_.end()) return it->second;
        if (memo_.size() >= kAlignStateBudget) {
            exhausted_ = true;
            return kInf;
        }
        const std::string& w = cand_[i];
        const std::size_t need = need_[w];
        std::size_t best = kInf;
        if (used[w] + remaining_in_cand_[i] >= need) {
            best = search(i + 1, -1, mask, used);
        }
        if (used[w] < need) {
            for (std::size_t j = 0; j < ref_.size(); ++j) {
                if (ref_[j] != w || (mask >> j & 1u)) continue;
                const std::size_t extra = prev >= 0 && static_cast<std::size_t>(prev) + 1 == j ? 0 : 1;
                ++used[w];
                const std::size_t rest = search(i + 1, static_cast<int>(j), mask | (std::uint64_t{1} << j), used);
                --used[w];
                if (rest != kInf) best = std::min(best, rest + extra);
            }
        }
        memo_.emplace(key, best);
        return best;
    }

    // Left-to-right alignment preferring to extend the current chunk.
    std::size_t greedy() const {
        std::vector<bool> used(ref_.size(), false);
        std::size_t chunks = 0;
        int prev = -1;
        std::map<std::string, std::size_t> done;
        for (std::size_t i = 0; i < cand_.size(); ++i) {
            const std::string& w = cand_[i];
            if (done[w] >= need_.at(w)) {
                prev = -1;
                continue;
            }
            int pick = -1;
            if (prev >= 0 && static_cast<std::size_t>(prev) + 1 < ref_.size() && !used[prev + 1] && ref_[prev + 1] == w) {
                pick = prev + 1;
            } else {
                for (std::size_t j = 0; j < ref_.size(); ++j) {
                    if (!used[j] && ref_[j] == w) {
                        pick = static_cast<int>(j);
                        break;
                    }
                }
                ++chunks;
            }
            used[pick] = true;
            ++done[w];
            prev = pick;
        }
        return chunks;
    }

    struct Key {
        std::size_t i;
        int prev;
        std::uint64_t mask;
        bool operator==(const Key&) const = default;
    };
    struct KeyHash {
        std::size_t operator()(const Key& k) const {
            return std::hash<std::uint64_t>()(k.mask * 0x9E3779B97F4A7C15ull ^ (k.i << 8) ^ static_cast<std::size_t>(k.prev + 1));
        }
    };
    static constexpr std::size_t kInf = std::numeric_limits<std::size_t>::max();

    const Tokens& cand_;
    const Tokens& ref_;
    std::map<std::string, std::size_t> need_;
    std::vector<std::size_t> remaining_in_cand_;
    std::size_t matches_ = 0;
    std::unordered_map<Key, std::size_t, KeyHash> memo_;
    bool exhausted_ = false;
};

}  // namespace

std::map<std::string, std::size_t> ngram_counts(const Tokens& tokens, std::size_t n) {
    Counts counts;
    if (n == 0 || tokens.size() < n) return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        std::string key = tokens[i];
        for (std::size_t k = 1; k < n; ++k) key += ' ' + tokens[i + k];
        ++counts[key];
    }
    return counts;
}

std::array<double, 4> bleu(std::span<const ScoredPair> pairs) {
    std::array<std::size_t, kMaxN> matched{}, total{};
    std::size_t cand_len = 0, ref_len = 0;
    for (const auto& pair : pairs) {
        if (pair.references.empty()) throw ValidationError("references", "each pair needs at least one reference");
        const std::size_t c = pair.candidate.size();
        cand_len += c;
        std::size_t best = pair.references.front().size();
        for (const auto& ref : pair.references) {
            const auto d = [c](std::size_t r) { return r > c ? r - c : c - r; };
            if (d(ref.size()) < d(best) || (d(ref.size()) == d(best) && ref.size() < best)) best = ref.size();
        }
        ref_len += best;
        for (int n = 1; n <= kMaxN; ++n) {
            Counts max_ref;
            for (const auto& ref : pair.references) {
                for (const auto& [g, k] : ngram_counts(ref, static_cast<std::size_t>(n))) {
                    max_ref[g] = std::max(max_ref[g], k);
                }
            }
            for (const auto& [g, k] : ngram_counts(pair.candidate, static_cast<std::size_t>(n))) {
                total[n - 1] += k;
                const auto it = max_ref.find(g);
                if (it != max_ref.end()) matched[n - 1] += std::min(k, it->second);
            }
        }
    }
    std::array<double, 4> out{};
    if (cand_len == 0) return out;
    const double bp = cand_len < ref_len
                          ? std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len))
                          : 1.0;
    double log_sum = 0;
    for (int n = 0; n < kMaxN; ++n) {
        if (matched[n] == 0 || total[n] == 0) break;
        log_sum += std::log(static_cast<double>(matched[n]) / static_cast<double>(total[n]));
        out[n] = bp * std::exp(log_sum / (n + 1));
    }
    return out;
}

double sentence_bleu_smoothed(const ScoredPair& pair, int max_n) {
    const std::size_t c = pair.candidate.size();
    if (c == 0 || pair.references.empty()) return 0;
    std::size_t best = pair.references.front().size();
    for (const auto& ref : pair.references) {
        const auto d = [c](std::size_t r) { return r > c ? r - c : c - r; };
        if (d(ref.size()) < d(best) || (d(ref.size()) == d(best) && ref.size() < best)) best = ref.size();
    }
    double log_sum = 0;
    for (int n = 1; n <= max_n; ++n) {
        Counts max_ref;
        for (const auto& ref : pair.references) {
            for (const auto& [g, k] : ngram_counts(ref, static_cast<std::size_t>(n))) max_ref[g] = std::max(max_ref[g], k);
        }
        std::size_t m = 0, t = 0;
        for (const auto& [g, k] : ngram_counts(pair.candidate, static_cast<std::size_t>(n))) {
            t += k;
            const auto it = max_ref.find(g);
            if (it != max_ref.end()) m += std::min(k, it->second);
        }
        const double add = n > 1 ? 1.0 : 0.0;
        if (m + add == 0) return 0;
        log_sum += std::log((static_cast<double>(m) + add) / (static_cast<double>(t) + add));
    }
    const double bp = c < best ? std::exp(1.0 - static_cast<double>(best) / static_cast<double>(c)) : 1.0;
    return bp * std::exp(log_sum / max_n);
}

double rouge_l(const ScoredPair& pair) {
    double best = 0;
    for (const auto& ref : pair.references) {
        if (pair.candidate.empty() || ref.empty()) continue;
        const double l = static_cast<double>(lcs(pair.candidate, ref));
        if (l == 0) continue;
        const double p = l / static_cast<double>(pair.candidate.size());
        const double r = l / static_cast<double>(ref.size());
        const double b2 = kRougeBeta * kRougeBeta;
        best = std::max(best, (1 + b2) * p * r / (r + b2 * p));
    }
    return best;
}

double rouge_l(std::span<const ScoredPair> pairs) {
    if (pairs.empty()) return 0;
    double s = 0;
    for (const auto& p : pairs) s += rouge_l(p);
    return s / static_cast<double>(pairs.size());
}

CiderIdf CiderIdf::from_documents(std::span<const std::vector<Tokens>> documents) {
    if (documents.size() < 2) throw ValidationError("references", "CIDEr-D needs at least two reference documents");
    CiderIdf idf;
    idf.documents_ = documents.size();
    for (const auto& doc : documents) {
        std::set<std::string> grams;
        for (const auto& ref : doc) {
            for (int n = 1; n <= kMaxN; ++n) {
                for (const auto& [g, k] : ngram_counts(ref, static_cast<std::size_t>(n))) grams.insert(g);
            }
        }
        for (const auto& g : grams) ++idf.df_[g];
    }
    return idf;
}

CiderIdf CiderIdf::from_pairs(std::span<const ScoredPair> pairs) {
    std::vector<std::vector<Tokens>> docs;
    docs.reserve(pairs.size());
    for (const auto& p : pairs) docs.push_back(p.references);
    return from_documents(docs);
}

double CiderIdf::idf(const std::string& ngram_key) const {
    const auto it = df_.find(ngram_key);
    const double df = it == df_.end() ? 0.0 : static_cast<double>(it->second);
    return std::log(static_cast<double>(documents_)) - std::log(std::max(1.0, df));
}

std::vector<double> cider_d_scores(std::span<const ScoredPair> pairs, const CiderIdf& idf) {
    std::vector<double> scores;
    scores.reserve(pairs.size());
    for (const auto& pair : pairs) {
        if (pair.references.empty()) throw ValidationError("references", "each pair needs at least one reference");
        const CiderVector cand = cider_vector(pair.candidate, idf);
        double s = 0;
        for (const auto& ref : pair.references) s += cider_similarity(cand, cider_vector(ref, idf));
        scores.push_back(10.0 * s / static_cast<double>(pair.references.size()));
    }
    return scores;
}

double cider_d(std::span<const ScoredPair> pairs, const CiderIdf& idf) {
    const auto scores = cider_d_scores(pairs, idf);
    if (scores.empty()) return 0;
    double s = 0;
    for (const double v : scores) s += v;
    return s / static_cast<double>(scores.size());
}

double cider_d(std::span<const ScoredPair> pairs) { return cider_d(pairs, CiderIdf::from_pairs(pairs)); }

Alignment align(const Tokens& candidate, const Tokens& reference) {
    ChunkSearch search(candidate, reference);
    return {search.matches(), search.min_chunks()};
}

double meteor_lite(const ScoredPair& pair) {
    double best = 0;
    for (const auto& ref : pair.references) {
        const Alignment a = align(pair.candidate, ref);
        if (a.matches == 0) continue;
        const double m = static_cast<double>(a.matches);
        const double p = m / static_cast<double>(pair.candidate.size());
        const double r = m / static_cast<double>(ref.size());
        const double f = 10 * p * r / (r + 9 * p);
        const double frag = static_cast<double>(a.chunks) / m;
        best = std::max(best, f * (1 - 0.5 * frag * frag * frag));
    }
    return best;
}

double meteor_lite(std::span<const ScoredPair> pairs) {
    if (pairs.empty()) return 0;
    double s = 0;
    for (const auto& p : pairs) s += meteor_lite(p);
    return s / static_cast<double>(pairs.size());
}

MetricReport score_all(std::span<const ScoredPair> pairs, const CiderIdf* idf) {
    MetricReport r;
    const auto b = bleu(pairs);
    r.b1 = b[0];
    r.b2 = b[1];
    r.b3 = b[2];
    r.b4 = b[3];
    r.meteor = meteor_lite(pairs);
    r.rouge_l = rouge_l(pairs);
    r.cider_d = idf ? cider_d(pairs, *idf) : cider_d(pairs);
    return r;
}

}  // namespace ovc::metrics
