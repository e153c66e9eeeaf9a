#include "gsc/overlap.hpp"

#include <map>
#include <ostream>

#include "gsc/errors.hpp"

namespace gsc {

OverlapReport overlap_report(const std::vector<PredictionRecord>& pred_a,
                             const std::vector<PredictionRecord>& pred_b,
                             const std::vector<QAInstance>& gold) {
  std::map<std::string, int> b_preds;
  for (const PredictionRecord& r : pred_b) b_preds[r.id] = r.pred;
  std::map<std::string, int> labels;
  for (const QAInstance& inst : gold) labels[inst.id] = inst.label;
  if (pred_a.size() != pred_b.size() || pred_a.size() != gold.size()) {
    throw alignment_error(
        "prediction/gold sizes differ: a=" + std::to_string(pred_a.size()) +
        " b=" + std::to_string(pred_b.size()) +
        " gold=" + std::to_string(gold.size()));
  }

  OverlapReport rep;
  long agree = 0, ca = 0, cb = 0;
  for (const PredictionRecord& ra : pred_a) {
    const auto itb = b_preds.find(ra.id);
    const auto itg = labels.find(ra.id);
    if (itb == b_preds.end() || itg == labels.end()) {
      throw alignment_error("instance id " + ra.id +
                            " missing from the other prediction file or gold");
    }
    const bool a_correct = ra.pred == itg->second;
    const bool b_correct = itb->second == itg->second;
    const bool same = ra.pred == itb->second;
    const int region = (a_correct ? 1 : 0) | (b_correct ? 2 : 0) |
                       (same ? 4 : 0);
    ++rep.region_counts[region];
    ++rep.total;
    if (same) ++agree;
    if (a_correct) ++ca;
    if (b_correct) ++cb;
  }
  rep.agreement = rep.total ? static_cast<double>(agree) / rep.total : 0.0;
  rep.acc_a = rep.total ? static_cast<double>(ca) / rep.total : 0.0;
  rep.acc_b = rep.total ? static_cast<double>(cb) / rep.total : 0.0;
  return rep;
}

void print_overlap(std::ostream& out, const OverlapReport& rep) {
  static const char* names[8] = {
      "both wrong, disagree", "a correct only, disagree",
      "b correct only, disagree", "both correct, disagree",
      "both wrong, agree",    "a correct only, agree",
      "b correct only, agree", "both correct, agree",
  };
  out << "instances: " << rep.total << "\n";
  out << "accuracy a: " << rep.acc_a << "\n";
  out << "accuracy b: " << rep.acc_b << "\n";
  out << "agreement: " << rep.agreement << "\n";
  for (int r = 0; r < 8; ++r) {
    out << "region " << r << " (" << names[r]
        << "): " << rep.region_counts[r] << "\n";
  }
}

}  // namespace gsc
