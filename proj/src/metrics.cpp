#include "avconsist/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "avconsist/errors.hpp"

namespace avc {

void LabeledScores::validate() const {
  if (scores.size() != labels.size())
    throw ConfigError("scores/labels length mismatch in category \"" + category + "\"");
  if (scores.empty()) throw ConfigError("empty score set in category \"" + category + "\"");
  bool has_real = false, has_fake = false;
  for (size_t k = 0; k < labels.size(); ++k) {
    if (labels[k] == 1)
      has_real = true;
    else if (labels[k] == 0)
      has_fake = true;
    else
      throw ConfigError("label must be 0 (fake) or 1 (real) in category \"" + category + "\"");
    if (!std::isfinite(scores[k]))
      throw ConfigError("non-finite score in category \"" + category + "\"");
  }
  if (!has_real || !has_fake)
    throw DataError("single-class input in category \"" + category +
                    "\": need both real and fake samples");
}

double roc_auc(const LabeledScores& data) {
  data.validate();
  const size_t n = data.scores.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return data.scores[a] < data.scores[b]; });

  // average ranks over ties, then the rank-sum form of Mann-Whitney U
  std::vector<double> rank(n);
  size_t k = 0;
  while (k < n) {
    size_t j = k;
    while (j + 1 < n && data.scores[order[j + 1]] == data.scores[order[k]]) ++j;
    const double avg = 0.5 * static_cast<double>(k + j) + 1.0;  // 1-based
    for (size_t m = k; m <= j; ++m) rank[order[m]] = avg;
    k = j + 1;
  }

  double rank_sum_real = 0.0;
  long n_real = 0, n_fake = 0;
  for (size_t m = 0; m < n; ++m) {
    if (data.labels[m] == 1) {
      rank_sum_real += rank[m];
      ++n_real;
    } else {
      ++n_fake;
    }
  }
  const double u = rank_sum_real - 0.5 * static_cast<double>(n_real) * (n_real + 1);
  return u / (static_cast<double>(n_real) * static_cast<double>(n_fake));
}

double average_precision(const LabeledScores& data) {
  data.validate();
  const size_t n = data.scores.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  // fake = low combined score, so detection ranking is ascending score
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return data.scores[a] < data.scores[b]; });

  long positives = 0;
  for (int label : data.labels)
    if (label == 0) ++positives;

  double sum_precision = 0.0;
  long hits = 0;
  for (size_t rank = 0; rank < n; ++rank) {
    if (data.labels[order[rank]] == 0) {
      ++hits;
      sum_precision += static_cast<double>(hits) / static_cast<double>(rank + 1);
    }
  }
  return sum_precision / static_cast<double>(positives);
}

EvalTable evaluate_categories(const std::vector<LabeledScores>& categories) {
  EvalTable table;
  double ap_sum = 0.0, auc_sum = 0.0;
  int scored = 0;
  for (const auto& cat : categories) {
    CategoryRow row;
    row.category = cat.category;
    try {
      row.ap = average_precision(cat);
      row.auc = roc_auc(cat);
      ap_sum += *row.ap;
      auc_sum += *row.auc;
      ++scored;
    } catch (const ConfigError& e) {
      row.note = e.what();
    } catch (const DataError& e) {
      row.note = e.what();
    }
    table.rows.push_back(std::move(row));
  }
  if (scored > 0) {
    table.avg_ap = ap_sum / scored;
    table.avg_auc = auc_sum / scored;
  }
  return table;
}

std::string eval_table_to_csv(const EvalTable& table) {
  std::ostringstream os;
  os.precision(17);
  os << "category,ap,auc,note\n";
  for (const auto& row : table.rows) {
    os << row.category << ",";
    if (row.ap) os << *row.ap;
    os << ",";
    if (row.auc) os << *row.auc;
    os << "," << row.note << "\n";
  }
  if (table.avg_ap) os << "AVG," << *table.avg_ap << "," << *table.avg_auc << ",\n";
  return os.str();
}

std::string eval_table_to_text(const EvalTable& table) {
  std::ostringstream os;
  // convention header: higher combined score = real; AP positive class = fake
  os << "category        AP(%)    AUC(%)   (higher score => real; AP positive = fake)\n";
  os << std::fixed << std::setprecision(2);
  for (const auto& row : table.rows) {
    os << std::left << std::setw(15) << row.category << " ";
    if (row.ap)
      os << std::right << std::setw(7) << (*row.ap * 100.0) << "  " << std::setw(7)
         << (*row.auc * 100.0);
    else
      os << "   --       --   " << row.note;
    os << "\n";
  }
  if (table.avg_ap)
    os << std::left << std::setw(15) << "AVG" << " " << std::right << std::setw(7)
       << (*table.avg_ap * 100.0) << "  " << std::setw(7) << (*table.avg_auc * 100.0) << "\n";
  return os.str();
}

}  // namespace avc
