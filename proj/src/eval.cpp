#include "swapdetect/eval.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

using nlohmann::json;

namespace swapdetect {

ConfusionCounts confusion_counts(const std::vector<Verdict>& verdicts,
                                 const std::vector<int>& truth_labels) {
  if (verdicts.size() != truth_labels.size())
    throw ValidationError("confusion_counts: verdict/truth length mismatch");
  if (verdicts.empty()) throw ValidationError("confusion_counts: empty input");
  ConfusionCounts counts;
  for (std::size_t i = 0; i < verdicts.size(); ++i) {
    if (truth_labels[i] != 0 && truth_labels[i] != 1)
      throw ValidationError("confusion_counts: label must be 0 or 1");
    const bool truly_swapped = truth_labels[i] == 0;
    const bool flagged = verdicts[i].face_swapped;
    if (truly_swapped && flagged) ++counts.tp;
    else if (truly_swapped && !flagged) ++counts.fn;
    else if (!truly_swapped && flagged) ++counts.fp;
    else ++counts.tn;
  }
  return counts;
}

MetricsReport compute_metrics(const ConfusionCounts& counts) {
  if (counts.total() < 1) throw ValidationError("compute_metrics: no pairs");
  MetricsReport report;
  report.confusion = counts;
  report.n_pairs = counts.total();
  report.accuracy =
      static_cast<double>(counts.tp + counts.tn) / static_cast<double>(counts.total());
  if (counts.tp + counts.fp > 0)
    report.precision =
        static_cast<double>(counts.tp) / static_cast<double>(counts.tp + counts.fp);
  if (counts.tp + counts.fn > 0)
    report.recall =
        static_cast<double>(counts.tp) / static_cast<double>(counts.tp + counts.fn);
  if (report.precision && report.recall && *report.precision + *report.recall > 0.0)
    report.f1 =
        2.0 * *report.precision * *report.recall / (*report.precision + *report.recall);
  return report;
}

double auc(const std::vector<double>& scores, const std::vector<int>& truth_labels) {
  if (scores.size() != truth_labels.size())
    throw ValidationError("auc: score/truth length mismatch");
  long n_pos = 0, n_neg = 0;
  for (int label : truth_labels) {
    if (label != 0 && label != 1)
      throw ValidationError("auc: label must be 0 or 1");
    label == 0 ? ++n_pos : ++n_neg;
  }
  if (n_pos == 0 || n_neg == 0)
    throw ValidationError("auc: both classes must be present");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&scores](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  // Sweep thresholds over tie groups; trapezoid between consecutive ROC
  // points gives tied pairs half credit, matching Mann-Whitney.
  double area = 0.0;
  double prev_tpr = 0.0, prev_fpr = 0.0;
  long cum_tp = 0, cum_fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double value = scores[order[i]];
    while (i < order.size() && scores[order[i]] == value) {
      truth_labels[order[i]] == 0 ? ++cum_tp : ++cum_fp;
      ++i;
    }
    const double tpr = static_cast<double>(cum_tp) / static_cast<double>(n_pos);
    const double fpr = static_cast<double>(cum_fp) / static_cast<double>(n_neg);
    area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
    prev_tpr = tpr;
    prev_fpr = fpr;
  }
  return area;
}

std::string to_string(Protocol protocol) {
  return protocol == Protocol::kInDataset ? "in-dataset" : "cross-dataset";
}

Protocol protocol_from_string(const std::string& name) {
  if (name == "in-dataset") return Protocol::kInDataset;
  if (name == "cross-dataset") return Protocol::kCrossDataset;
  throw ConfigError("unknown protocol '" + name + "'");
}

namespace {

bool technique_seen(const std::vector<std::string>& trained,
                    const std::string& technique) {
  return std::find(trained.begin(), trained.end(), technique) != trained.end();
}

MetricsReport evaluate_method(const std::vector<const PairFeatures*>& pairs,
                              const std::vector<Verdict>& verdicts,
                              const std::vector<double>& detection_scores,
                              Protocol protocol, const ProtocolOptions& options,
                              Method method) {
  std::vector<int> truth;
  truth.reserve(pairs.size());
  for (const auto* pf : pairs) truth.push_back(pf->label);

  MetricsReport report = compute_metrics(confusion_counts(verdicts, truth));
  const bool both_classes =
      std::count(truth.begin(), truth.end(), 0) > 0 &&
      std::count(truth.begin(), truth.end(), 1) > 0;
  if (both_classes) report.auc = auc(detection_scores, truth);
  report.protocol = to_string(protocol);
  report.method = to_string(method);
  report.dataset_id = options.dataset_id;
  return report;
}

}  // namespace

std::vector<MetricsReport> run_protocol_on_features(
    const ProtocolModels& models, const std::vector<PairFeatures>& test_features,
    Protocol protocol, const ProtocolOptions& options) {
  if (!models.classifier && !models.anomaly)
    throw ConfigError("run_protocol: no model given");

  std::vector<MetricsReport> reports;

  if (models.classifier) {
    std::vector<const PairFeatures*> selected;
    for (const auto& pf : test_features) {
      const bool seen =
          technique_seen(models.classifier->training_techniques(), pf.technique);
      if ((protocol == Protocol::kInDataset) == seen) selected.push_back(&pf);
    }
    if (selected.empty())
      throw ValidationError("protocol '" + to_string(protocol) +
                            "' selects zero pairs for the classifier");
    std::vector<Verdict> verdicts;
    std::vector<double> detection_scores;
    for (const auto* pf : selected) {
      const double p = models.classifier->predict_pair(pf->ref, pf->sus);
      Verdict v;
      v.face_swapped = classifier_flags_swap(p, options.decision_cutoff);
      v.score = p;
      v.method = Method::kClassifier;
      v.threshold_used = options.decision_cutoff;
      verdicts.push_back(v);
      detection_scores.push_back(1.0 - p);
    }
    MetricsReport report = evaluate_method(selected, verdicts, detection_scores,
                                           protocol, options, Method::kClassifier);
    report.decision_cutoff = options.decision_cutoff;
    reports.push_back(std::move(report));
  }

  if (models.anomaly) {
    const ThresholdCalibration& cal = models.anomaly->calibration();
    std::vector<const PairFeatures*> selected;
    for (const auto& pf : test_features) {
      const bool seen =
          technique_seen(models.anomaly->training_techniques(), pf.technique);
      if ((protocol == Protocol::kInDataset) == seen) selected.push_back(&pf);
    }
    if (selected.empty())
      throw ValidationError("protocol '" + to_string(protocol) +
                            "' selects zero pairs for the anomaly detector");
    std::vector<Verdict> verdicts;
    std::vector<double> detection_scores;
    for (const auto* pf : selected) {
      const double score = models.anomaly->anomaly_score(pf->ref, pf->sus);
      Verdict v;
      v.face_swapped = anomaly_flags_swap(score, cal.threshold);
      v.score = score;
      v.method = Method::kAnomaly;
      v.threshold_used = cal.threshold;
      verdicts.push_back(v);
      detection_scores.push_back(score);
    }
    MetricsReport report = evaluate_method(selected, verdicts, detection_scores,
                                           protocol, options, Method::kAnomaly);
    report.threshold = cal.threshold;
    reports.push_back(std::move(report));
  }

  return reports;
}

std::vector<MetricsReport> run_protocol(const ProtocolModels& models,
                                        const DatasetManifest& manifest,
                                        const FeatureExtractorConfig& fe_config,
                                        Protocol protocol,
                                        const ProtocolOptions& options) {
  const StyleFeatureExtractor extractor(fe_config);
  const auto test_features =
      extract_dataset_features(manifest, Split::kTest, extractor);
  return run_protocol_on_features(models, test_features, protocol, options);
}

json to_json(const MetricsReport& report) {
  json j;
  j["accuracy"] = report.accuracy;
  j["precision"] = report.precision ? json(*report.precision) : json();
  j["recall"] = report.recall ? json(*report.recall) : json();
  j["f1"] = report.f1 ? json(*report.f1) : json();
  j["auc"] = report.auc ? json(*report.auc) : json();
  j["confusion"] = {{"tp", report.confusion.tp},
                    {"fp", report.confusion.fp},
                    {"tn", report.confusion.tn},
                    {"fn", report.confusion.fn}};
  j["protocol"] = report.protocol;
  j["method"] = report.method;
  j["dataset_id"] = report.dataset_id;
  j["n_pairs"] = report.n_pairs;
  if (report.decision_cutoff) j["decision_cutoff"] = *report.decision_cutoff;
  if (report.threshold) j["threshold"] = *report.threshold;
  return j;
}

MetricsReport metrics_report_from_json(const json& j) {
  MetricsReport report;
  report.accuracy = j.at("accuracy").get<double>();
  if (!j.at("precision").is_null()) report.precision = j.at("precision").get<double>();
  if (!j.at("recall").is_null()) report.recall = j.at("recall").get<double>();
  if (!j.at("f1").is_null()) report.f1 = j.at("f1").get<double>();
  if (!j.at("auc").is_null()) report.auc = j.at("auc").get<double>();
  const json& c = j.at("confusion");
  report.confusion = {c.at("tp").get<long>(), c.at("fp").get<long>(),
                      c.at("tn").get<long>(), c.at("fn").get<long>()};
  report.protocol = j.at("protocol").get<std::string>();
  report.method = j.at("method").get<std::string>();
  report.dataset_id = j.at("dataset_id").get<std::string>();
  report.n_pairs = j.at("n_pairs").get<long>();
  if (j.contains("decision_cutoff"))
    report.decision_cutoff = j.at("decision_cutoff").get<double>();
  if (j.contains("threshold")) report.threshold = j.at("threshold").get<double>();
  return report;
}

void save_reports(const std::vector<MetricsReport>& reports,
                  const json& fingerprints, const std::string& path) {
  json doc;
  doc["fingerprints"] = fingerprints;
  json rows = json::array();
  for (const MetricsReport& r : reports) rows.push_back(to_json(r));
  doc["reports"] = rows;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write report: " + path);
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("short write: " + path);
}

std::vector<MetricsReport> load_reports(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open report: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw IoError("corrupt report file: " + std::string(e.what()));
  }
  std::vector<MetricsReport> reports;
  for (const json& r : doc.at("reports")) reports.push_back(metrics_report_from_json(r));
  return reports;
}

}  // namespace swapdetect
