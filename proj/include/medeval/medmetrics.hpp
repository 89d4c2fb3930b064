#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "medeval/answers.hpp"

namespace medeval::medmetrics {

struct ConfusionCounts {
  long tp = 0;
  long fp = 0;
  long fn = 0;
  long tn = 0;

  long total() const { return tp + fp + fn + tn; }
  void add(bool gold, bool pred) {
    if (gold && pred) ++tp;
    else if (!gold && pred) ++fp;
    else if (gold && !pred) ++fn;
    else ++tn;
  }
};

/// F1 = 2tp / (2tp + fp + fn); 0 when the denominator is 0.
double f1_from_counts(const ConfusionCounts& c);
double accuracy_from_counts(const ConfusionCounts& c);
double precision_from_counts(const ConfusionCounts& c);
double recall_from_counts(const ConfusionCounts& c);

/// Unweighted mean; errors on an empty list.
double macro(const std::vector<double>& values);

/// Intersection area over union area; 0 when the union is empty.
double iou(const BBox& a, const BBox& b);

/// Among several returned boxes, the one whose label best matches the
/// queried object: normalized exact match first, then token-set overlap,
/// ties broken by first occurrence. nullopt on an empty list.
std::optional<BBox> select_bbox(const std::vector<BBox>& candidates,
                                const std::string& query_label);

struct IouRecord {
  std::optional<BBox> prediction;  // nullopt = ParseMiss / no box returned
  BBox gold;
};

/// Arithmetic mean of per-record IoU, missing predictions scoring 0.
double mean_iou(const std::vector<IouRecord>& records);

/// Lowercase, punctuation treated as separators, whitespace-split.
std::vector<std::string> normalize_tokens(const std::string& text);

/// Token-multiset precision/recall F1. Empty vs empty is 1, empty vs
/// non-empty 0.
double tokenized_f1(const std::string& pred, const std::string& gold);

struct PrF1 {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Token-level LCS F1 (beta = 1) with the same normalization as
/// tokenized_f1.
PrF1 rouge_l_scores(const std::string& pred, const std::string& ref);
double rouge_l(const std::string& pred, const std::string& ref);

// ---- lab-report label matching ---------------------------------------------

enum class MatchPhase { ExactNameResult, ExactName, Fuzzy };

std::string to_string(MatchPhase p);

struct MatchedPair {
  std::size_t pred_index = 0;
  std::size_t gold_index = 0;
  MatchPhase phase = MatchPhase::ExactNameResult;
};

struct Matching {
  std::vector<MatchedPair> pairs;
  std::vector<std::size_t> unmatched_pred;
  std::vector<std::size_t> unmatched_gold;
};

struct MatcherParams {
  double fuzzy_jaccard_min = 0.8;
  double numeric_rel_tol = 1e-9;
};

/// Trim, collapse whitespace, casefold, strip trailing punctuation, drop
/// parenthesized abbreviations.
std::string normalize_name(const std::string& s);
/// Same minus the parenthetical drop (values can legitimately contain them).
std::string normalize_value(const std::string& s);

double token_set_jaccard(const std::string& a, const std::string& b);

/// Phase 1: equal normalized name AND result. Phase 2: equal normalized
/// name. Phase 3: name token-set Jaccard >= threshold, greedy by descending
/// similarity, ties by gold order then pred order. Each phase consumes its
/// matches; the result is one-to-one.
Matching match_lab_entries(const std::vector<LabTestEntry>& pred,
                           const std::vector<LabTestEntry>& gold,
                           const MatcherParams& params = {});

struct ExtractionScore {
  PrF1 overall;
  std::map<std::string, PrF1> per_field;
};

/// Field values compare numerically when both parse as numbers (relative
/// tolerance), otherwise by normalized text. Field precision/recall count
/// entries with a non-empty value for that field.
ExtractionScore score_extraction(const Matching& matching,
                                 const std::vector<LabTestEntry>& pred,
                                 const std::vector<LabTestEntry>& gold,
                                 const MatcherParams& params = {});

bool lab_field_equal(const std::string& pred, const std::string& gold,
                     double numeric_rel_tol = 1e-9);

// ---- temporal ---------------------------------------------------------------

struct TemporalRecord {
  std::string pathology;
  TemporalClass gold = TemporalClass::Stable;
  std::optional<TemporalClass> pred;  // nullopt = ParseMiss, scored wrong
};

/// Per pathology: accuracy per gold class (absent classes skipped), macro
/// over the present classes, then unweighted mean over pathologies.
double temporal_macro_accuracy(const std::vector<TemporalRecord>& records);

}  // namespace medeval::medmetrics
