#include "medeval/medmetrics.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <map>
#include <set>

#include "medeval/common.hpp"

namespace medeval::medmetrics {

double f1_from_counts(const ConfusionCounts& c) {
  const double denom = 2.0 * c.tp + c.fp + c.fn;
  return denom > 0.0 ? 2.0 * c.tp / denom : 0.0;
}

double accuracy_from_counts(const ConfusionCounts& c) {
  const long total = c.total();
  return total > 0 ? static_cast<double>(c.tp + c.tn) / total : 0.0;
}

double precision_from_counts(const ConfusionCounts& c) {
  const long denom = c.tp + c.fp;
  return denom > 0 ? static_cast<double>(c.tp) / denom : 0.0;
}

double recall_from_counts(const ConfusionCounts& c) {
  const long denom = c.tp + c.fn;
  return denom > 0 ? static_cast<double>(c.tp) / denom : 0.0;
}

double macro(const std::vector<double>& values) {
  if (values.empty()) throw ValidationError("macro: empty value list");
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

double iou(const BBox& a, const BBox& b) {
  if (!a.valid() || !b.valid()) throw ValidationError("iou: box violates invariants");
  const double iy = std::max(0.0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
  const double ix = std::max(0.0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
  const double inter = iy * ix;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

std::optional<BBox> select_bbox(const std::vector<BBox>& candidates,
                                const std::string& query_label) {
  if (candidates.empty()) return std::nullopt;
  const std::string query = normalize_name(query_label);
  double best_score = -1.0;
  std::size_t best = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const std::string label = normalize_name(candidates[i].label);
    const double score = label == query ? 2.0 : token_set_jaccard(label, query);
    if (score > best_score) {
      best_score = score;
      best = i;
    }
  }
  return candidates[best];
}

double mean_iou(const std::vector<IouRecord>& records) {
  if (records.empty()) throw ValidationError("mean_iou: empty record list");
  double sum = 0.0;
  for (const IouRecord& r : records) {
    if (r.prediction) sum += iou(*r.prediction, r.gold);
  }
  return sum / static_cast<double>(records.size());
}

std::vector<std::string> normalize_tokens(const std::string& text) {
  std::string cleaned;
  cleaned.reserve(text.size());
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::ispunct(u)) {
      cleaned.push_back(' ');
    } else {
      cleaned.push_back(static_cast<char>(std::tolower(u)));
    }
  }
  return split_whitespace(cleaned);
}

namespace {

double harmonic_f1(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<std::size_t> prev(b.size() + 1, 0);
  std::vector<std::size_t> cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

double tokenized_f1(const std::string& pred, const std::string& gold) {
  const std::vector<std::string> p = normalize_tokens(pred);
  const std::vector<std::string> g = normalize_tokens(gold);
  if (p.empty() && g.empty()) return 1.0;
  if (p.empty() || g.empty()) return 0.0;
  std::map<std::string, long> counts;
  for (const std::string& t : g) ++counts[t];
  long overlap = 0;
  for (const std::string& t : p) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  const double precision = static_cast<double>(overlap) / p.size();
  const double recall = static_cast<double>(overlap) / g.size();
  return harmonic_f1(precision, recall);
}

PrF1 rouge_l_scores(const std::string& pred, const std::string& ref) {
  const std::vector<std::string> p = normalize_tokens(pred);
  const std::vector<std::string> r = normalize_tokens(ref);
  if (p.empty() && r.empty()) return PrF1{1.0, 1.0, 1.0};
  if (p.empty() || r.empty()) return PrF1{0.0, 0.0, 0.0};
  const double lcs = static_cast<double>(lcs_length(p, r));
  PrF1 out;
  out.precision = lcs / p.size();
  out.recall = lcs / r.size();
  out.f1 = harmonic_f1(out.precision, out.recall);
  return out;
}

double rouge_l(const std::string& pred, const std::string& ref) {
  return rouge_l_scores(pred, ref).f1;
}

// ---- lab-report label matching ---------------------------------------------

namespace {

std::string strip_parentheticals(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  int depth = 0;
  for (char c : s) {
    if (c == '(') {
      ++depth;
    } else if (c == ')') {
      if (depth > 0) --depth;
    } else if (depth == 0) {
      out.push_back(c);
    }
  }
  return out;
}

std::string strip_trailing_punct(std::string s) {
  while (!s.empty() && std::ispunct(static_cast<unsigned char>(s.back()))) s.pop_back();
  return s;
}

std::optional<double> parse_number(const std::string& s) {
  const std::string_view t = trim(s);
  if (t.empty()) return std::nullopt;
  double value = 0.0;
  const char* begin = t.data();
  const char* end = t.data() + t.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end) return std::nullopt;
  return value;
}

}  // namespace

std::string normalize_name(const std::string& s) {
  return strip_trailing_punct(to_lower(collapse_whitespace(strip_parentheticals(s))));
}

std::string normalize_value(const std::string& s) {
  return strip_trailing_punct(to_lower(collapse_whitespace(s)));
}

double token_set_jaccard(const std::string& a, const std::string& b) {
  const std::vector<std::string> ta = split_whitespace(a);
  const std::vector<std::string> tb = split_whitespace(b);
  const std::set<std::string> sa(ta.begin(), ta.end());
  const std::set<std::string> sb(tb.begin(), tb.end());
  if (sa.empty() && sb.empty()) return 1.0;
  std::size_t inter = 0;
  for (const std::string& t : sa) inter += sb.count(t);
  const std::size_t uni = sa.size() + sb.size() - inter;
  return uni > 0 ? static_cast<double>(inter) / uni : 0.0;
}

Matching match_lab_entries(const std::vector<LabTestEntry>& pred,
                           const std::vector<LabTestEntry>& gold,
                           const MatcherParams& params) {
  std::vector<std::string> pred_names(pred.size());
  std::vector<std::string> gold_names(gold.size());
  for (std::size_t i = 0; i < pred.size(); ++i) pred_names[i] = normalize_name(pred[i].name);
  for (std::size_t i = 0; i < gold.size(); ++i) gold_names[i] = normalize_name(gold[i].name);

  std::vector<bool> pred_used(pred.size(), false);
  std::vector<bool> gold_used(gold.size(), false);
  Matching matching;

  const auto claim = [&](std::size_t pi, std::size_t gi, MatchPhase phase) {
    pred_used[pi] = true;
    gold_used[gi] = true;
    matching.pairs.push_back(MatchedPair{pi, gi, phase});
  };

  // Phase 1: exact normalized name AND result.
  for (std::size_t gi = 0; gi < gold.size(); ++gi) {
    if (gold_used[gi]) continue;
    for (std::size_t pi = 0; pi < pred.size(); ++pi) {
      if (pred_used[pi]) continue;
      if (pred_names[pi] == gold_names[gi] &&
          normalize_value(pred[pi].result) == normalize_value(gold[gi].result)) {
        claim(pi, gi, MatchPhase::ExactNameResult);
        break;
      }
    }
  }

  // Phase 2: exact normalized name.
  for (std::size_t gi = 0; gi < gold.size(); ++gi) {
    if (gold_used[gi]) continue;
    for (std::size_t pi = 0; pi < pred.size(); ++pi) {
      if (pred_used[pi]) continue;
      if (pred_names[pi] == gold_names[gi]) {
        claim(pi, gi, MatchPhase::ExactName);
        break;
      }
    }
  }

  // Phase 3: fuzzy name similarity, greedy by descending score.
  struct Candidate {
    double score;
    std::size_t gi;
    std::size_t pi;
  };
  std::vector<Candidate> candidates;
  for (std::size_t gi = 0; gi < gold.size(); ++gi) {
    if (gold_used[gi]) continue;
    for (std::size_t pi = 0; pi < pred.size(); ++pi) {
      if (pred_used[pi]) continue;
      const double score = token_set_jaccard(pred_names[pi], gold_names[gi]);
      if (score >= params.fuzzy_jaccard_min) candidates.push_back(Candidate{score, gi, pi});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.gi != b.gi) return a.gi < b.gi;
    return a.pi < b.pi;
  });
  for (const Candidate& c : candidates) {
    if (pred_used[c.pi] || gold_used[c.gi]) continue;
    claim(c.pi, c.gi, MatchPhase::Fuzzy);
  }

  for (std::size_t pi = 0; pi < pred.size(); ++pi) {
    if (!pred_used[pi]) matching.unmatched_pred.push_back(pi);
  }
  for (std::size_t gi = 0; gi < gold.size(); ++gi) {
    if (!gold_used[gi]) matching.unmatched_gold.push_back(gi);
  }
  std::sort(matching.pairs.begin(), matching.pairs.end(),
            [](const MatchedPair& a, const MatchedPair& b) { return a.gold_index < b.gold_index; });
  return matching;
}

std::string to_string(MatchPhase p) {
  switch (p) {
    case MatchPhase::ExactNameResult: return "EXACT_NAME_RESULT";
    case MatchPhase::ExactName: return "EXACT_NAME";
    default: return "FUZZY";
  }
}

bool lab_field_equal(const std::string& pred, const std::string& gold, double numeric_rel_tol) {
  const auto pn = parse_number(pred);
  const auto gn = parse_number(gold);
  if (pn && gn) {
    const double scale = std::max({1.0, std::abs(*pn), std::abs(*gn)});
    return std::abs(*pn - *gn) <= numeric_rel_tol * scale;
  }
  return normalize_value(pred) == normalize_value(gold);
}

ExtractionScore score_extraction(const Matching& matching,
                                 const std::vector<LabTestEntry>& pred,
                                 const std::vector<LabTestEntry>& gold,
                                 const MatcherParams& params) {
  ExtractionScore score;
  const double tp = static_cast<double>(matching.pairs.size());
  const double fp = static_cast<double>(matching.unmatched_pred.size());
  const double fn = static_cast<double>(matching.unmatched_gold.size());
  score.overall.precision = tp + fp > 0.0 ? tp / (tp + fp) : 0.0;
  score.overall.recall = tp + fn > 0.0 ? tp / (tp + fn) : 0.0;
  score.overall.f1 = harmonic_f1(score.overall.precision, score.overall.recall);

  for (const char* field : kLabFields) {
    double correct = 0.0;
    for (const MatchedPair& pair : matching.pairs) {
      const std::string& pv = lab_field(pred[pair.pred_index], field);
      const std::string& gv = lab_field(gold[pair.gold_index], field);
      if (!pv.empty() && !gv.empty() && lab_field_equal(pv, gv, params.numeric_rel_tol)) {
        correct += 1.0;
      }
    }
    double pred_nonempty = 0.0;
    double gold_nonempty = 0.0;
    for (const LabTestEntry& e : pred) {
      if (!lab_field(e, field).empty()) pred_nonempty += 1.0;
    }
    for (const LabTestEntry& e : gold) {
      if (!lab_field(e, field).empty()) gold_nonempty += 1.0;
    }
    PrF1 f;
    f.precision = pred_nonempty > 0.0 ? correct / pred_nonempty : 0.0;
    f.recall = gold_nonempty > 0.0 ? correct / gold_nonempty : 0.0;
    f.f1 = harmonic_f1(f.precision, f.recall);
    score.per_field[field] = f;
  }
  return score;
}

double temporal_macro_accuracy(const std::vector<TemporalRecord>& records) {
  if (records.empty()) throw ValidationError("temporal_macro_accuracy: empty record list");
  struct ClassTally {
    long correct = 0;
    long total = 0;
  };
  std::map<std::string, std::map<TemporalClass, ClassTally>> by_pathology;
  for (const TemporalRecord& r : records) {
    ClassTally& tally = by_pathology[r.pathology][r.gold];
    ++tally.total;
    if (r.pred && *r.pred == r.gold) ++tally.correct;
  }
  std::vector<double> per_pathology;
  for (const auto& [pathology, classes] : by_pathology) {
    std::vector<double> per_class;
    for (const auto& [cls, tally] : classes) {
      per_class.push_back(static_cast<double>(tally.correct) / tally.total);
    }
    per_pathology.push_back(macro(per_class));
  }
  return macro(per_pathology);
}

}  // namespace medeval::medmetrics
