#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace ovc::metrics {

using Tokens = std::vector<std::string>;

struct ScoredPair {
    Tokens candidate;
    std::vector<Tokens> references;  ///< non-empty
};

/// Corpus-level BLEU@1..4: clipped n-gram precision, geometric mean and a
/// brevity penalty against the closest reference length (shorter on ties).
std::array<double, 4> bleu(std::span<const ScoredPair> pairs);

/// Sentence BLEU@n with add-one smoothing on orders above 1. Debug aid only.
double sentence_bleu_smoothed(const ScoredPair& pair, int max_n = 4);

/// LCS F-measure with beta = 1.2, maximized over references.
double rouge_l(const ScoredPair& pair);
double rouge_l(std::span<const ScoredPair> pairs);  ///< mean over pairs

/// Document frequencies of 1..4-grams over a set of reference documents.
class CiderIdf {
  public:
    /// One document per entry; throws ValidationError when fewer than two.
    static CiderIdf from_documents(std::span<const std::vector<Tokens>> documents);
    static CiderIdf from_pairs(std::span<const ScoredPair> pairs);

    double idf(const std::string& ngram_key) const;
    std::size_t documents() const { return documents_; }

  private:
    std::map<std::string, std::size_t> df_;
    std::size_t documents_ = 0;
};

/// Per-pair CIDEr-D scores (sigma 6, factor 10, n = 1..4).
std::vector<double> cider_d_scores(std::span<const ScoredPair> pairs, const CiderIdf& idf);
/// Mean CIDEr-D with the IDF taken from the pairs' own references.
double cider_d(std::span<const ScoredPair> pairs);
double cider_d(std::span<const ScoredPair> pairs, const CiderIdf& idf);

/// Exact-match METEOR: maximal unigram alignment with fewest chunks,
/// F = 10PR / (R + 9P), penalty 0.5 (chunks / matches)^3, maximized over
/// references.
double meteor_lite(const ScoredPair& pair);
double meteor_lite(std::span<const ScoredPair> pairs);  ///< mean over pairs

/// Fewest chunks over maximal exact alignments of candidate onto reference,
/// and the match count.
struct Alignment {
    std::size_t matches = 0;
    std::size_t chunks = 0;
};
Alignment align(const Tokens& candidate, const Tokens& reference);

struct MetricReport {
    double b1 = 0, b2 = 0, b3 = 0, b4 = 0;
    double meteor = 0;
    double rouge_l = 0;
    double cider_d = 0;

    bool operator==(const MetricReport&) const = default;
};

/// Every metric over the pairs. The CIDEr-D IDF comes from the pairs unless
/// idf is given.
MetricReport score_all(std::span<const ScoredPair> pairs, const CiderIdf* idf = nullptr);

/// n-gram key used by the count tables: tokens joined by a single space.
std::map<std::string, std::size_t> ngram_counts(const Tokens& tokens, std::size_t n);

}  // namespace ovc::metrics
