#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace mkt {

struct PredictionRecord {
  std::uint32_t user = 0;
  double score = 0.0;
  std::uint8_t label = 0;
};

// Mann-Whitney AUC; tied scores count 1/2. Throws UndefinedMetricError
// unless both classes are present.
double auc(std::span<const PredictionRecord> records);

struct GaucResult {
  double gauc = 0.0;
  std::size_t users_counted = 0;
  std::size_t users_skipped = 0;  // single-class users, excluded from both sums
};

// Impression-weighted mean of per-user AUCs. Throws UndefinedMetricError
// when every user is single-class.
GaucResult gauc(std::span<const PredictionRecord> records);

struct ActivityBucket {
  std::string name;
  std::size_t lo = 0;
  std::size_t hi = 0;  // exclusive; SIZE_MAX for the open bucket
};

// [0, 10), [10, 30), [30, inf) clicks.
const std::vector<ActivityBucket>& activity_buckets();

struct GroupMetrics {
  std::string bucket;
  std::size_t n_users = 0;
  std::size_t n_records = 0;
  std::optional<double> auc;
  std::optional<double> gauc;
  std::size_t users_skipped = 0;
};

struct MetricsReport {
  double auc = 0.0;
  double gauc = 0.0;
  std::size_t n_users_counted = 0;
  std::size_t n_users_skipped = 0;
  std::size_t n_records = 0;
  std::vector<GroupMetrics> groups;

  nlohmann::ordered_json to_json() const;
  // One row per (bucket, metric); the overall figures use bucket "all".
  std::string to_csv() const;
};

// Overall and per-activity-bucket metrics. Every record's user must appear
// in `clicks_by_user` (ValidationError otherwise). Empty or single-class
// buckets report null metrics.
MetricsReport group_report(std::span<const PredictionRecord> records,
                           const std::unordered_map<std::uint32_t, std::size_t>& clicks_by_user);

}  // namespace mkt
