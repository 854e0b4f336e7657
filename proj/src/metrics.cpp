#include "mkt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

#include "mkt/errors.hpp"

namespace mkt {

double auc(std::span<const PredictionRecord> records) {
  std::vector<std::size_t> order(records.size());
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    order[i] = i;
    if (!std::isfinite(records[i].score)) throw ValidationError("non-finite score in AUC input");
    n_pos += records[i].label ? 1 : 0;
  }
  const std::size_t n_neg = records.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw UndefinedMetricError("AUC needs at least one positive and one negative");
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return records[a].score < records[b].score; });
  // Sum of (1-based, tie-averaged) ranks of the positives.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::size_t pos_in_run = 0;
    while (j < order.size() && records[order[j]].score == records[order[i]].score) {
      pos_in_run += records[order[j]].label ? 1 : 0;
      ++j;
    }
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    rank_sum += avg_rank * static_cast<double>(pos_in_run);
    i = j;
  }
  const double np = static_cast<double>(n_pos);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

GaucResult gauc(std::span<const PredictionRecord> records) {
  std::map<std::uint32_t, std::vector<PredictionRecord>> by_user;
  for (const auto& r : records) by_user[r.user].push_back(r);
  GaucResult out;
  double num = 0.0, den = 0.0;
  for (const auto& [user, recs] : by_user) {
    const std::size_t pos = static_cast<std::size_t>(
        std::count_if(recs.begin(), recs.end(), [](const PredictionRecord& r) { return r.label != 0; }));
    if (pos == 0 || pos == recs.size()) {
      ++out.users_skipped;
      continue;
    }
    const double w = static_cast<double>(recs.size());
    num += w * auc(recs);
    den += w;
    ++out.users_counted;
  }
  if (out.users_counted == 0) throw UndefinedMetricError("GAUC undefined: every user is single-class");
  out.gauc = num / den;
  return out;
}

const std::vector<ActivityBucket>& activity_buckets() {
  static const std::vector<ActivityBucket> buckets{
      {"0-10", 0, 10}, {"10-30", 10, 30}, {">30", 30, std::numeric_limits<std::size_t>::max()}};
  return buckets;
}

MetricsReport group_report(std::span<const PredictionRecord> records,
                           const std::unordered_map<std::uint32_t, std::size_t>& clicks_by_user) {
  const auto& buckets = activity_buckets();
  std::vector<std::vector<PredictionRecord>> per_bucket(buckets.size());
  std::vector<std::map<std::uint32_t, bool>> users(buckets.size());
  for (const auto& r : records) {
    auto it = clicks_by_user.find(r.user);
    if (it == clicks_by_user.end())
      throw ValidationError("user " + std::to_string(r.user) + " missing from the activity map");
    for (std::size_t b = 0; b < buckets.size(); ++b) {
      if (it->second >= buckets[b].lo && it->second < buckets[b].hi) {
        per_bucket[b].push_back(r);
        users[b][r.user] = true;
        break;
      }
    }
  }
  MetricsReport rep;
  rep.n_records = records.size();
  rep.auc = auc(records);
  const GaucResult g = gauc(records);
  rep.gauc = g.gauc;
  rep.n_users_counted = g.users_counted;
  rep.n_users_skipped = g.users_skipped;
  for (std::size_t b = 0; b < buckets.size(); ++b) {
    GroupMetrics gm;
    gm.bucket = buckets[b].name;
    gm.n_users = users[b].size();
    gm.n_records = per_bucket[b].size();
    try {
      gm.auc = auc(per_bucket[b]);
    } catch (const UndefinedMetricError&) {
    }
    try {
      const GaucResult bg = gauc(per_bucket[b]);
      gm.gauc = bg.gauc;
      gm.users_skipped = bg.users_skipped;
    } catch (const UndefinedMetricError&) {
      gm.users_skipped = gm.n_users;
    }
    rep.groups.push_back(gm);
  }
  return rep;
}

namespace {

nlohmann::ordered_json opt(const std::optional<double>& v) { return v ? nlohmann::ordered_json(*v) : nullptr; }

std::string fmt(const std::optional<double>& v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", *v);
  return buf;
}

}  // namespace

nlohmann::ordered_json MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["auc"] = auc;
  j["gauc"] = gauc;
  j["n_records"] = n_records;
  j["n_users_counted"] = n_users_counted;
  j["n_users_skipped"] = n_users_skipped;
  auto arr = nlohmann::ordered_json::array();
  for (const auto& g : groups) {
    arr.push_back({{"bucket", g.bucket},
                   {"n_users", g.n_users},
                   {"n_records", g.n_records},
                   {"auc", opt(g.auc)},
                   {"gauc", opt(g.gauc)},
                   {"users_skipped", g.users_skipped}});
  }
  j["groups"] = arr;
  return j;
}

std::string MetricsReport::to_csv() const {
  std::string out = "bucket,metric,value\n";
  auto row = [&](const std::string& b, const char* m, const std::string& v) { out += b + "," + m + "," + v + "\n"; };
  row("all", "auc", fmt(auc));
  row("all", "gauc", fmt(gauc));
  row("all", "n_records", std::to_string(n_records));
  for (const auto& g : groups) {
    row(g.bucket, "auc", fmt(g.auc));
    row(g.bucket, "gauc", fmt(g.gauc));
    row(g.bucket, "n_users", std::to_string(g.n_users));
    row(g.bucket, "n_records", std::to_string(g.n_records));
  }
  return out;
}

}  // namespace mkt
