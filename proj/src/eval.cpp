#include "protosnap/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <tuple>

#include "protosnap/error.hpp"

namespace protosnap {

Annotation Annotation::from_skeleton(const Skeleton& s, int width, int height) {
  return {s.sign_name, s.keypoints(), width, height, s};
}

Annotation load_annotation(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open annotation " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, path.string() + ": " + e.what());
  }
  const Skeleton s = skeleton_from_json(j);
  int w = 0, h = 0;
  if (j.contains("image_size")) {
    w = j["image_size"].at(0).get<int>();
    h = j["image_size"].at(1).get<int>();
  }
  return Annotation::from_skeleton(s, w, h);
}

void save_annotation(const Annotation& annotation, const std::filesystem::path& path) {
  auto j = skeleton_to_json(annotation.skeleton);
  j["image_size"] = {annotation.image_width, annotation.image_height};
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

MatchCounts match_keypoints(const std::vector<Point>& pred, const std::vector<Point>& gt, double threshold) {
  std::vector<std::tuple<double, int, int>> candidates;
  for (int i = 0; i < static_cast<int>(pred.size()); ++i) {
    for (int j = 0; j < static_cast<int>(gt.size()); ++j) {
      const double d = distance(pred[i], gt[j]);
      if (d <= threshold) candidates.emplace_back(d, i, j);
    }
  }
  std::sort(candidates.begin(), candidates.end());
  std::vector<bool> pred_used(pred.size(), false), gt_used(gt.size(), false);
  MatchCounts out;
  for (const auto& [d, i, j] : candidates) {
    if (pred_used[i] || gt_used[j]) continue;
    pred_used[i] = gt_used[j] = true;
    ++out.tp;
  }
  out.fp = static_cast<int>(pred.size()) - out.tp;
  out.fn = static_cast<int>(gt.size()) - out.tp;
  return out;
}

Prf prf_from_counts(const MatchCounts& c) {
  Prf out;
  out.counts = c;
  out.precision = c.tp + c.fp > 0 ? static_cast<double>(c.tp) / (c.tp + c.fp) : 0.0;
  out.recall = c.tp + c.fn > 0 ? static_cast<double>(c.tp) / (c.tp + c.fn) : 0.0;
  const double s = out.precision + out.recall;
  out.f1 = s > 0.0 ? 2.0 * out.precision * out.recall / s : 0.0;
  return out;
}

MetricReport evaluate_corpus(const std::map<std::string, Annotation>& pred,
                             const std::map<std::string, Annotation>& gt, const std::vector<double>& thresholds) {
  for (const auto& [key, _] : gt) {
    if (!pred.contains(key)) throw Error(ErrorCode::KeyMismatch, "no prediction for " + key);
  }
  for (const auto& [key, p] : pred) {
    const auto it = gt.find(key);
    if (it == gt.end()) throw Error(ErrorCode::KeyMismatch, "no ground truth for " + key);
    if (it->second.sign_name != p.sign_name) {
      throw Error(ErrorCode::KeyMismatch, key + ": sign " + p.sign_name + " vs " + it->second.sign_name);
    }
  }

  const std::size_t nt = thresholds.size();
  std::vector<MatchCounts> total(nt);
  std::map<std::string, std::vector<MatchCounts>> by_sign;
  for (const auto& [key, g] : gt) {
    const auto& p = pred.at(key);
    auto& sign = by_sign[g.sign_name];
    sign.resize(nt);
    for (std::size_t t = 0; t < nt; ++t) {
      const MatchCounts c = match_keypoints(p.keypoints, g.keypoints, thresholds[t]);
      total[t] += c;
      sign[t] += c;
    }
  }

  MetricReport report;
  report.thresholds = thresholds;
  report.images = static_cast<int>(gt.size());
  for (const auto& c : total) report.overall.push_back(prf_from_counts(c));
  for (const auto& [sign, counts] : by_sign) {
    auto& rows = report.per_sign[sign];
    for (const auto& c : counts) rows.push_back(prf_from_counts(c));
  }
  return report;
}

namespace {

nlohmann::json prf_row(const std::vector<double>& thresholds, const std::vector<Prf>& rows) {
  nlohmann::json out = nlohmann::json::object();
  for (std::size_t t = 0; t < thresholds.size(); ++t) {
    const auto& r = rows[t];
    out[std::to_string(static_cast<int>(thresholds[t]))] = {{"threshold", thresholds[t]},
                                                            {"precision", r.precision},
                                                            {"recall", r.recall},
                                                            {"f1", r.f1},
                                                            {"tp", r.counts.tp},
                                                            {"fp", r.counts.fp},
                                                            {"fn", r.counts.fn}};
  }
  return out;
}

}  // namespace

nlohmann::json report_to_json(const MetricReport& report) {
  nlohmann::json per_sign = nlohmann::json::object();
  for (const auto& [sign, rows] : report.per_sign) per_sign[sign] = prf_row(report.thresholds, rows);
  return {{"images", report.images},
          {"thresholds", report.thresholds},
          {"overall", prf_row(report.thresholds, report.overall)},
          {"per_sign", per_sign}};
}

std::string report_to_table(const MetricReport& report) {
  std::ostringstream out;
  char buf[64];
  auto row = [&](const std::string& name, const std::vector<Prf>& rows) {
    std::snprintf(buf, sizeof buf, "%-16s", name.c_str());
    out << buf;
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof buf, "  %6.2f %6.2f %6.2f", 100 * r.precision, 100 * r.recall, 100 * r.f1);
      out << buf;
    }
    out << '\n';
  };
  std::snprintf(buf, sizeof buf, "%-16s", "sign");
  out << buf;
  for (double t : report.thresholds) {
    std::snprintf(buf, sizeof buf, "  %6s %6s %6s", ("P@" + std::to_string(static_cast<int>(t))).c_str(),
                  ("R@" + std::to_string(static_cast<int>(t))).c_str(),
                  ("F1@" + std::to_string(static_cast<int>(t))).c_str());
    out << buf;
  }
  out << '\n';
  for (const auto& [sign, rows] : report.per_sign) row(sign, rows);
  row("ALL (" + std::to_string(report.images) + ")", report.overall);
  return out.str();
}

}  // namespace protosnap
