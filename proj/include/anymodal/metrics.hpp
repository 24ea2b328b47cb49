#ifndef ANYMODAL_METRICS_HPP
#define ANYMODAL_METRICS_HPP

// Desk-scale evaluation: CIDEr-D, ROUGE-L, choice accuracy, ROC-AUC, and
// the human-feedback aggregations (Likert percentages, pairwise win rates).

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace anymodal {

struct CaptionItem {
    std::string id;
    std::string candidate;
    std::vector<std::string> references;
};
using CaptionCorpus = std::vector<CaptionItem>;

// Pinned caption tokenization: lowercase, strip punctuation, whitespace split.
inline std::vector<std::string> caption_tokens(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        unsigned char uc = static_cast<unsigned char>(c);
        if (std::isalnum(uc)) {
            cur.push_back(static_cast<char>(std::tolower(uc)));
        } else if (std::isspace(uc)) {
            if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
        }
        // punctuation dropped
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

// --- ROUGE-L -----------------------------------------------------------------

namespace detail {

inline size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (size_t i = 1; i <= a.size(); ++i) {
        for (size_t j = 1; j <= b.size(); ++j)
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

} // namespace detail

// LCS F-measure with beta = 1.2, max over references.
inline double rouge_l(const std::string& candidate, const std::vector<std::string>& references,
                      double beta = 1.2) {
    if (references.empty()) throw std::invalid_argument("rouge_l: empty reference set");
    auto cand = caption_tokens(candidate);
    if (cand.empty()) throw std::invalid_argument("rouge_l: empty candidate after tokenization");
    double best = 0.0;
    const double b2 = beta * beta;
    for (const auto& ref_s : references) {
        auto ref = caption_tokens(ref_s);
        if (ref.empty()) continue;
        double lcs = static_cast<double>(detail::lcs_length(cand, ref));
        if (lcs == 0.0) continue;
        double p = lcs / cand.size();
        double r = lcs / ref.size();
        best = std::max(best, (1.0 + b2) * r * p / (r + b2 * p));
    }
    return best;
}

// --- CIDEr-D -----------------------------------------------------------------

namespace detail {

using NgramCounts = std::map<std::vector<std::string>, double>;

inline std::vector<NgramCounts> ngram_counts(const std::vector<std::string>& toks, int max_n) {
    std::vector<NgramCounts> out(static_cast<size_t>(max_n));
    for (int n = 1; n <= max_n; ++n)
        for (size_t i = 0; i + static_cast<size_t>(n) <= toks.size(); ++i)
            out[static_cast<size_t>(n - 1)][std::vector<std::string>(
                toks.begin() + static_cast<long>(i), toks.begin() + static_cast<long>(i + n))] +=
                1.0;
    return out;
}

} // namespace detail

struct CiderResult {
    std::vector<double> per_item;
    double mean = 0.0;
};

// CIDEr-D: n = 1..4 TF-IDF cosine with candidate-count clipping and length
// gaussian penalty (sigma = 6), averaged over n and references, x10. The IDF
// is computed over the reference side of the corpus.
inline CiderResult cider_d(const CaptionCorpus& corpus, int max_n = 4, double sigma = 6.0) {
    if (corpus.size() < 2)
        throw std::invalid_argument("cider_d: corpus must have >= 2 items for IDF");
    for (const auto& item : corpus)
        if (item.references.empty())
            throw std::invalid_argument("cider_d: item '" + item.id + "' has no references");

    // document frequency: number of items whose references contain the ngram
    std::map<std::vector<std::string>, double> df;
    for (const auto& item : corpus) {
        std::set<std::vector<std::string>> seen;
        for (const auto& ref : item.references) {
            auto counts = detail::ngram_counts(caption_tokens(ref), max_n);
            for (const auto& per_n : counts)
                for (const auto& [ng, c] : per_n) seen.insert(ng);
        }
        for (const auto& ng : seen) df[ng] += 1.0;
    }
    const double log_n = std::log(static_cast<double>(corpus.size()));

    auto tfidf = [&](const detail::NgramCounts& counts) {
        detail::NgramCounts vec;
        double norm2 = 0.0;
        for (const auto& [ng, c] : counts) {
            auto it = df.find(ng);
            double d = it == df.end() ? 0.0 : it->second;
            double idf = log_n - std::log(std::max(d, 1.0));
            double v = c * idf;
            vec[ng] = v;
            norm2 += v * v;
        }
        return std::make_pair(vec, std::sqrt(norm2));
    };

    CiderResult res;
    for (const auto& item : corpus) {
        auto cand_toks = caption_tokens(item.candidate);
        auto cand_counts = detail::ngram_counts(cand_toks, max_n);
        double item_score = 0.0;
        for (int n = 1; n <= max_n; ++n) {
            auto [cvec, cnorm] = tfidf(cand_counts[static_cast<size_t>(n - 1)]);
            double score_n = 0.0;
            for (const auto& ref : item.references) {
                auto ref_toks = caption_tokens(ref);
                auto rcounts = detail::ngram_counts(ref_toks, max_n);
                auto [rvec, rnorm] = tfidf(rcounts[static_cast<size_t>(n - 1)]);
                double dot = 0.0;
                for (const auto& [ng, v] : cvec) {
                    auto it = rvec.find(ng);
                    if (it != rvec.end()) dot += std::min(v, it->second) * it->second;
                }
                double sim = (cnorm > 0 && rnorm > 0) ? dot / (cnorm * rnorm) : 0.0;
                double delta = static_cast<double>(cand_toks.size()) -
                               static_cast<double>(ref_toks.size());
                sim *= std::exp(-delta * delta / (2.0 * sigma * sigma));
                score_n += sim;
            }
            item_score += score_n / static_cast<double>(item.references.size());
        }
        res.per_item.push_back(10.0 * item_score / max_n);
    }
    res.mean = std::accumulate(res.per_item.begin(), res.per_item.end(), 0.0) /
               static_cast<double>(res.per_item.size());
    return res;
}

// --- accuracy ----------------------------------------------------------------

enum class Normalizer { exact, casefold_strip_punct };

inline std::string normalize_answer(const std::string& s, Normalizer n) {
    if (n == Normalizer::exact) return s;
    std::string out;
    for (char c : s) {
        unsigned char uc = static_cast<unsigned char>(c);
        if (std::isalnum(uc) || std::isspace(uc)) out.push_back(static_cast<char>(std::tolower(uc)));
    }
    // collapse/trim whitespace
    std::string trimmed;
    bool in_space = true;
    for (char c : out) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            in_space = true;
        } else {
            if (in_space && !trimmed.empty()) trimmed.push_back(' ');
            trimmed.push_back(c);
            in_space = false;
        }
    }
    return trimmed;
}

inline double choice_accuracy(const std::vector<std::string>& predictions,
                              const std::vector<std::string>& golds, Normalizer norm) {
    if (predictions.size() != golds.size())
        throw std::invalid_argument("choice_accuracy: length mismatch");
    if (predictions.empty()) throw std::invalid_argument("choice_accuracy: empty inputs");
    size_t hit = 0;
    for (size_t i = 0; i < predictions.size(); ++i)
        if (normalize_answer(predictions[i], norm) == normalize_answer(golds[i], norm)) ++hit;
    return static_cast<double>(hit) / static_cast<double>(predictions.size());
}

// --- ROC-AUC -----------------------------------------------------------------

// Probability a random positive outranks a random negative; ties count 0.5.
inline double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("roc_auc: length mismatch");
    size_t pos = 0, neg = 0;
    for (int l : labels) (l ? pos : neg)++;
    if (pos == 0 || neg == 0)
        throw std::invalid_argument("roc_auc: both classes must be present");
    double wins = 0.0;
    for (size_t i = 0; i < scores.size(); ++i) {
        if (!labels[i]) continue;
        for (size_t j = 0; j < scores.size(); ++j) {
            if (labels[j]) continue;
            if (scores[i] > scores[j]) wins += 1.0;
            else if (scores[i] == scores[j]) wins += 0.5;
        }
    }
    return wins / (static_cast<double>(pos) * static_cast<double>(neg));
}

// --- human-feedback aggregation ----------------------------------------------

enum class RubricCriterion {
    recognition,
    response_accuracy,
    relevance,
    coherence,
    conciseness,
    completeness,
    integrity
};

inline const char* rubric_criterion_name(RubricCriterion c) {
    switch (c) {
        case RubricCriterion::recognition: return "recognition";
        case RubricCriterion::response_accuracy: return "response_accuracy";
        case RubricCriterion::relevance: return "relevance";
        case RubricCriterion::coherence: return "coherence";
        case RubricCriterion::conciseness: return "conciseness";
        case RubricCriterion::completeness: return "completeness";
        case RubricCriterion::integrity: return "integrity";
    }
    throw std::invalid_argument("unknown criterion");
}

inline RubricCriterion rubric_criterion_from_name(const std::string& s) {
    for (RubricCriterion c :
         {RubricCriterion::recognition, RubricCriterion::response_accuracy,
          RubricCriterion::relevance, RubricCriterion::coherence, RubricCriterion::conciseness,
          RubricCriterion::completeness, RubricCriterion::integrity})
        if (s == rubric_criterion_name(c)) return c;
    throw std::invalid_argument("unknown criterion: " + s);
}

inline bool rubric_criterion_binary(RubricCriterion c) {
    return c == RubricCriterion::response_accuracy || c == RubricCriterion::integrity;
}

struct RubricRecord {
    std::string item_id;
    RubricCriterion criterion;
    int score; // {0,1,2}; binary criteria restricted to {0,2}

    void validate() const {
        if (score < 0 || score > 2)
            throw std::invalid_argument("rubric score out of range: " + std::to_string(score));
        if (rubric_criterion_binary(criterion) && score == 1)
            throw std::invalid_argument(std::string("criterion ") +
                                        rubric_criterion_name(criterion) + " is binary {0,2}");
    }
};

// Percentage per criterion: mean score / 2 * 100 (pinned convention).
inline std::map<std::string, double> aggregate_likert(const std::vector<RubricRecord>& records) {
    if (records.empty()) throw std::invalid_argument("aggregate_likert: no records");
    std::map<std::string, std::pair<double, int>> acc;
    for (const auto& r : records) {
        r.validate();
        auto& [sum, n] = acc[rubric_criterion_name(r.criterion)];
        sum += r.score;
        ++n;
    }
    std::map<std::string, double> out;
    for (auto& [k, sn] : acc) out[k] = sn.first / (2.0 * sn.second) * 100.0;
    return out;
}

enum class PairwiseVerdict { win, tie, lose };

struct PairwiseRecord {
    std::string item_id;
    PairwiseVerdict verdict;
};

struct WinRate {
    double win_pct, tie_pct, lose_pct;
};

inline WinRate pairwise_winrate(const std::vector<PairwiseRecord>& records) {
    if (records.empty()) throw std::invalid_argument("pairwise_winrate: no records");
    double w = 0, t = 0, l = 0;
    for (const auto& r : records) {
        switch (r.verdict) {
            case PairwiseVerdict::win: w += 1; break;
            case PairwiseVerdict::tie: t += 1; break;
            case PairwiseVerdict::lose: l += 1; break;
        }
    }
    const double n = static_cast<double>(records.size());
    return WinRate{100.0 * w / n, 100.0 * t / n, 100.0 * l / n};
}

} // namespace anymodal

#endif
