#include "avisc/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

namespace avisc {

namespace {

std::string lowercase(std::string_view text) {
    std::string out(text);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

bool word_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_';
}

size_t intersection_size(const ObjectSet& a, const ObjectSet& b) {
    size_t n = 0;
    for (const auto& x : a) n += b.count(x);
    return n;
}

}  // namespace

const char* to_string(YesNo value) {
    switch (value) {
        case YesNo::Yes: return "yes";
        case YesNo::No: return "no";
        case YesNo::Unparsed: return "unparsed";
    }
    return "?";
}

YesNo parse_yes_no(std::string_view text) {
    const std::string lower = lowercase(text);
    size_t i = 0;
    while (i < lower.size()) {
        while (i < lower.size() && !word_char(lower[i])) ++i;
        const size_t start = i;
        while (i < lower.size() && word_char(lower[i])) ++i;
        const std::string_view word(lower.data() + start, i - start);
        if (word == "yes") return YesNo::Yes;
        if (word == "no") return YesNo::No;
    }
    return YesNo::Unparsed;
}

PopeScores pope_scores(const std::vector<BinaryOutcome>& outcomes) {
    if (outcomes.empty()) {
        throw std::invalid_argument("cannot score an empty outcome list");
    }
    PopeScores s;
    for (const BinaryOutcome& o : outcomes) {
        if (o.label == YesNo::Unparsed) {
            throw std::invalid_argument("outcome labels must be yes or no");
        }
        if (o.prediction == YesNo::Unparsed) ++s.unparsed;
        const bool label_yes = o.label == YesNo::Yes;
        const bool pred_yes = o.prediction == YesNo::Yes;
        const bool pred_no = o.prediction == YesNo::No;
        if (label_yes) {
            if (pred_yes) ++s.true_positive;
            else ++s.false_negative;  // No or Unparsed both miss the positive
        } else {
            if (pred_yes) ++s.false_positive;
            else if (pred_no) ++s.true_negative;
            // Unparsed on a No label: incorrect for accuracy, but not a
            // yes-prediction, so it stays out of the precision column
        }
    }
    const double total = static_cast<double>(outcomes.size());
    s.accuracy = static_cast<double>(s.true_positive + s.true_negative) / total;

    const size_t prec_den = s.true_positive + s.false_positive;
    const size_t rec_den = s.true_positive + s.false_negative;
    if (prec_den == 0) s.zero_division = true;
    else s.precision = static_cast<double>(s.true_positive) / static_cast<double>(prec_den);
    if (rec_den == 0) s.zero_division = true;
    else s.recall = static_cast<double>(s.true_positive) / static_cast<double>(rec_den);
    if (s.precision + s.recall == 0.0) s.zero_division = true;
    else s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
    return s;
}

MmeScores mme_scores(const std::vector<MmeItem>& items) {
    if (items.empty()) {
        throw std::invalid_argument("cannot score an empty item list");
    }
    size_t questions = 0, correct = 0, both_correct = 0;
    for (const MmeItem& item : items) {
        if (item.questions.size() != 2) {
            throw std::invalid_argument("image '" + item.image_id + "' has " +
                                        std::to_string(item.questions.size()) +
                                        " questions, expected exactly 2");
        }
        size_t item_correct = 0;
        for (const MmeQuestion& q : item.questions) {
            if (q.label == YesNo::Unparsed) {
                throw std::invalid_argument("labels must be yes or no");
            }
            ++questions;
            if (q.prediction == q.label) {
                ++correct;
                ++item_correct;
            }
        }
        if (item_correct == 2) ++both_correct;
    }
    MmeScores s;
    s.acc = static_cast<double>(correct) / static_cast<double>(questions);
    s.acc_plus = static_cast<double>(both_correct) / static_cast<double>(items.size());
    s.score = 100.0 * s.acc + 100.0 * s.acc_plus;
    return s;
}

double chair(const ObjectSet& response, const ObjectSet& truth) {
    if (response.empty()) return 0.0;  // nothing mentioned, nothing hallucinated
    return 1.0 - static_cast<double>(intersection_size(response, truth)) /
                     static_cast<double>(response.size());
}

double cover(const ObjectSet& response, const ObjectSet& truth) {
    if (truth.empty()) return 0.0;
    return static_cast<double>(intersection_size(response, truth)) /
           static_cast<double>(truth.size());
}

int hal(double chair_value) { return chair_value != 0.0 ? 1 : 0; }

double cog(const ObjectSet& response, const ObjectSet& hallucination_targets) {
    if (response.empty()) return 0.0;
    return static_cast<double>(intersection_size(response, hallucination_targets)) /
           static_cast<double>(response.size());
}

double amber_score(double chair_pct, double f1_pct) {
    if (chair_pct < 0.0 || chair_pct > 100.0 || f1_pct < 0.0 || f1_pct > 100.0) {
        throw std::invalid_argument("amber_score expects percentages in [0, 100]");
    }
    return ((100.0 - chair_pct) + f1_pct) / 2.0;
}

void ObjectLexicon::add(const std::string& canonical, const std::vector<std::string>& synonyms) {
    const std::string canon = lowercase(canonical);
    terms_.emplace_back(canon, canon);
    for (const std::string& syn : synonyms) {
        terms_.emplace_back(lowercase(syn), canon);
    }
    // longest term first so multi-word names win over their prefixes
    std::stable_sort(terms_.begin(), terms_.end(), [](const auto& a, const auto& b) {
        return a.first.size() > b.first.size();
    });
}

ObjectSet extract_objects(std::string_view text, const ObjectLexicon& lexicon) {
    if (lexicon.empty()) {
        throw std::invalid_argument("object lexicon is empty");
    }
    const std::string lower = lowercase(text);
    ObjectSet found;
    std::vector<bool> consumed(lower.size(), false);
    for (const auto& [term, canonical] : lexicon.terms()) {
        size_t pos = 0;
        while ((pos = lower.find(term, pos)) != std::string::npos) {
            const size_t end = pos + term.size();
            const bool left_ok = pos == 0 || !word_char(lower[pos - 1]);
            const bool right_ok = end == lower.size() || !word_char(lower[end]);
            const bool free = !consumed[pos];
            if (left_ok && right_ok && free) {
                found.insert(canonical);
                std::fill(consumed.begin() + static_cast<long>(pos),
                          consumed.begin() + static_cast<long>(end), true);
            }
            pos = end;
        }
    }
    return found;
}

}  // namespace avisc
