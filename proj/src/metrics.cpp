#include "spherecorr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace spherecorr {

namespace {

double dist(PixelCoord a, PixelCoord b) { return std::hypot(a.x - b.x, a.y - b.y); }

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

}  // namespace

double average_precision(std::vector<std::pair<double, bool>> s) {
  std::size_t npos = 0;
  for (const auto& x : s) npos += x.second;
  if (npos == 0) throw std::invalid_argument("average_precision: no positive samples");
  std::stable_sort(s.begin(), s.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return !a.second && b.second;  // negatives first on ties
  });
  double sum = 0.0;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (s[i].second) {
      ++tp;
      sum += static_cast<double>(tp) / static_cast<double>(i + 1);
    }
  return sum / static_cast<double>(npos);
}

double average_precision(const std::vector<KapSample>& samples) {
  std::vector<std::pair<double, bool>> s;
  s.reserve(samples.size());
  for (const auto& x : samples) s.emplace_back(x.score, x.positive);
  return average_precision(std::move(s));
}

std::vector<KapSample> kap_samples(const KeypointQuery& q, const std::vector<double>& scores, std::size_t height,
                                   std::size_t width) {
  if (scores.size() != height * width) throw std::invalid_argument("kap_samples: score grid size mismatch");
  const double ninf = -std::numeric_limits<double>::infinity();
  double in_max = ninf, out_max = ninf, all_max = ninf;
  bool in_any = false, out_any = false, all_any = false;
  for (std::size_t r = 0; r < height; ++r)
    for (std::size_t c = 0; c < width; ++c) {
      const double v = scores[r * width + c];
      if (v == ninf) continue;
      all_any = true;
      all_max = std::max(all_max, v);
      if (!q.target_gt) continue;
      if (dist({static_cast<double>(c), static_cast<double>(r)}, *q.target_gt) <= q.threshold) {
        in_any = true;
        in_max = std::max(in_max, v);
      } else {
        out_any = true;
        out_max = std::max(out_max, v);
      }
    }
  std::vector<KapSample> out;
  if (q.target_gt) {
    if (in_any) out.push_back({in_max, true, q.pair, q.keypoint, KapCase::in_radius});
    if (out_any) out.push_back({out_max, false, q.pair, q.keypoint, KapCase::out_radius});
  } else if (all_any) {
    out.push_back({all_max, false, q.pair, q.keypoint, KapCase::invisible_target});
  }
  return out;
}

void compute_pck(const std::vector<KeypointQuery>& queries, MetricReport& report) {
  struct PairAcc {
    std::size_t hits = 0, n = 0;
  };
  std::map<std::string, std::map<std::string, PairAcc>> per;  // category -> pair
  for (const auto& q : queries) {
    auto& acc = per[q.category][q.pair];
    report.categories[q.category].queries++;
    if (!q.target_gt) continue;
    acc.n++;
    acc.hits += dist(q.predicted, *q.target_gt) <= q.threshold;
  }
  double macro = 0.0;
  std::size_t ncat = 0;
  for (auto& [cat, pairs] : per) {
    CategoryScore& cs = report.categories[cat];
    double sum = 0.0;
    for (const auto& [pair, acc] : pairs) {
      if (acc.n == 0) {
        cs.skipped_pairs++;
        continue;
      }
      cs.pairs++;
      sum += static_cast<double>(acc.hits) / static_cast<double>(acc.n);
    }
    if (cs.pairs) {
      cs.pck = sum / static_cast<double>(cs.pairs);
      macro += *cs.pck;
      ++ncat;
    }
  }
  report.pck = ncat ? std::optional<double>(macro / static_cast<double>(ncat)) : std::nullopt;
}

void compute_kap(const std::vector<KapSample>& samples, const std::vector<std::string>& sample_categories,
                 MetricReport& report) {
  if (samples.size() != sample_categories.size()) throw std::invalid_argument("compute_kap: category list mismatch");
  std::map<std::string, std::vector<std::pair<double, bool>>> pooled;
  for (std::size_t i = 0; i < samples.size(); ++i)
    pooled[sample_categories[i]].emplace_back(samples[i].score, samples[i].positive);
  double macro = 0.0;
  std::size_t ncat = 0;
  for (auto& [cat, s] : pooled) {
    CategoryScore& cs = report.categories[cat];
    cs.samples = s.size();
    cs.positives = static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](const auto& x) { return x.second; }));
    if (cs.positives == 0) continue;
    cs.kap = average_precision(std::move(s));
    macro += *cs.kap;
    ++ncat;
  }
  report.kap = ncat ? std::optional<double>(macro / static_cast<double>(ncat)) : std::nullopt;
}

MirrorCheck mirror_check(const KeypointQuery& q, const std::optional<PixelCoord>& mirror_gt) {
  MirrorCheck m;
  if (!q.target_gt || !mirror_gt) return m;
  if (dist(*q.target_gt, *mirror_gt) <= 2.0 * q.threshold) return m;
  m.counted = true;
  m.confused = dist(q.predicted, *mirror_gt) <= q.threshold;
  return m;
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json cats = nlohmann::json::object();
  for (const auto& [name, c] : categories)
    cats[name] = {{"pck", opt(c.pck)},       {"kap", opt(c.kap)},       {"pairs", c.pairs},
                  {"skipped_pairs", c.skipped_pairs}, {"queries", c.queries}, {"samples", c.samples},
                  {"positives", c.positives}};
  nlohmann::json j{{"method", method},  {"kappa", kappa},   {"alpha", opt(alpha)},
                   {"categories", cats}, {"macro", {{"pck", opt(pck)}, {"kap", opt(kap)}}}};
  if (mirror_confusion) j["mirror_confusion"] = {{"rate", *mirror_confusion}, {"cases", mirror_cases}};
  return j;
}

std::string format_table(const std::vector<MetricReport>& reports) {
  auto cell = [](const std::optional<double>& v) {
    if (!v) return std::string("-");
    char b[32];
    std::snprintf(b, sizeof b, "%.1f", 100.0 * *v);
    return std::string(b);
  };
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"method", "category", "PCK", "KAP", "pairs", "mirror"});
  for (const auto& r : reports) {
    for (const auto& [name, c] : r.categories)
      rows.push_back({r.method, name, cell(c.pck), cell(c.kap), std::to_string(c.pairs), ""});
    rows.push_back({r.method, "macro", cell(r.pck), cell(r.kap), "", cell(r.mirror_confusion)});
  }
  std::vector<std::size_t> w(rows[0].size(), 0);
  for (const auto& row : rows)
    for (std::size_t i = 0; i < row.size(); ++i) w[i] = std::max(w[i], row[i].size());
  std::ostringstream os;
  char kb[64];
  std::snprintf(kb, sizeof kb, "kappa = %g", reports.empty() ? 0.0 : reports[0].kappa);
  os << kb << "\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) os << "  ";
      const std::string& s = row[i];
      if (i < 2)
        os << s << std::string(w[i] - s.size(), ' ');
      else
        os << std::string(w[i] - s.size(), ' ') << s;
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace spherecorr
