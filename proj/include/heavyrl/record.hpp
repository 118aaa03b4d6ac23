#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace heavyrl {

struct StepRow {
  std::int64_t t = 0;
  double instant_regret = 0.0;
  double cum_regret = 0.0;
  std::string diag_json = "{}";
};

/// Output of one seeded run; rows are dense in t starting at 1.
struct RunRecord {
  std::string run_id;
  std::string algorithm;
  std::uint64_t seed = 0;
  std::string fingerprint;
  std::vector<StepRow> rows;
  bool complete = true;
  std::string error;

  double final_regret() const { return rows.empty() ? 0.0 : rows.back().cum_regret; }
};

}  // namespace heavyrl
