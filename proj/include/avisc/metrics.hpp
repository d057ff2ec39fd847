#pragma once

#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace avisc {

enum class YesNo { Yes, No, Unparsed };

const char* to_string(YesNo value);

// First standalone "yes" or "no" word decides; neither present means
// Unparsed, which scores as incorrect downstream.
YesNo parse_yes_no(std::string_view text);

struct BinaryOutcome {
    YesNo prediction = YesNo::Unparsed;
    YesNo label = YesNo::No;  // never Unparsed
};

struct PopeScores {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    // some denominator was zero and the affected score was pinned to 0
    bool zero_division = false;
    size_t true_positive = 0, false_positive = 0, true_negative = 0, false_negative = 0;
    size_t unparsed = 0;
};

// Yes is the positive class; Unparsed predictions count as incorrect.
PopeScores pope_scores(const std::vector<BinaryOutcome>& outcomes);

struct MmeQuestion {
    YesNo label = YesNo::No;
    YesNo prediction = YesNo::Unparsed;
};

struct MmeItem {
    std::string image_id;
    std::vector<MmeQuestion> questions;  // exactly two
};

struct MmeScores {
    double acc = 0.0;       // fraction of questions correct
    double acc_plus = 0.0;  // fraction of images with both questions correct
    double score = 0.0;     // 100*acc + 100*acc_plus, 200 max
};

MmeScores mme_scores(const std::vector<MmeItem>& items);

using ObjectSet = std::set<std::string>;

// CHAIR = 1 - |R n A| / |R|; 0 when the response mentions nothing
double chair(const ObjectSet& response, const ObjectSet& truth);
// Cover = |R n A| / |A|; 0 when the annotation set is empty
double cover(const ObjectSet& response, const ObjectSet& truth);
// Hal = 1 iff CHAIR != 0
int hal(double chair_value);
// Cog = |R n H| / |R|; 0 when the response mentions nothing
double cog(const ObjectSet& response, const ObjectSet& hallucination_targets);

// ((100 - chair_pct) + f1_pct) / 2, both arguments on the 0..100 scale
double amber_score(double chair_pct, double f1_pct);

// Canonical object names plus synonyms, matched longest-first on word
// boundaries, case-insensitive.
class ObjectLexicon {
public:
    void add(const std::string& canonical, const std::vector<std::string>& synonyms = {});
    bool empty() const { return terms_.empty(); }
    size_t term_count() const { return terms_.size(); }

    // term (lowercase) -> canonical name, longest terms first
    const std::vector<std::pair<std::string, std::string>>& terms() const { return terms_; }

private:
    std::vector<std::pair<std::string, std::string>> terms_;
};

ObjectSet extract_objects(std::string_view text, const ObjectLexicon& lexicon);

}  // namespace avisc
