#pragma once

#include <optional>
#include <string>
#include <vector>

namespace avc {

// Orientation convention: label 1 = real, label 0 = fake; higher score = real.
struct LabeledScores {
  std::vector<double> scores;
  std::vector<int> labels;
  std::string category;

  void validate() const;  // equal lengths, both classes present
};

// Mann-Whitney AUC: fraction of (real, fake) pairs with real score above the
// fake score, ties counted 0.5.
double roc_auc(const LabeledScores& data);

// Step-wise (non-interpolated) average precision with fake as the positive
// detection class: rank by ascending score, ties broken by stable input order.
double average_precision(const LabeledScores& data);

struct CategoryRow {
  std::string category;
  std::optional<double> ap;   // empty when the category is absent/single-class
  std::optional<double> auc;
  std::string note;
};

struct EvalTable {
  std::vector<CategoryRow> rows;
  std::optional<double> avg_ap;   // mean over scored categories
  std::optional<double> avg_auc;
};

EvalTable evaluate_categories(const std::vector<LabeledScores>& categories);

std::string eval_table_to_csv(const EvalTable& table);
std::string eval_table_to_text(const EvalTable& table);  // percent formatting

}  // namespace avc
