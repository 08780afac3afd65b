// Apache License, Version 2.0, refer to LICENSE.txt

#include "cloglog/draws.hpp"

#include <algorithm>

#include "cloglog/error.hpp"

namespace cloglog {

void McmcConfig::validate() const {
  if (burn_in < 0 || kept < 1 || thin < 1) {
    throw UsageError("need burn-in >= 0, kept >= 1 and thin >= 1");
  }
  if (thin > kept) throw UsageError("thinning interval exceeds the number of kept iterations");
}

void PosteriorDraws::set_meta(const std::string& key, const std::string& value) {
  for (auto& kv : metadata) {
    if (kv.first == key) {
      kv.second = value;
      return;
    }
  }
  metadata.emplace_back(key, value);
}

std::string PosteriorDraws::meta(const std::string& key) const {
  for (const auto& kv : metadata) {
    if (kv.first == key) return kv.second;
  }
  return {};
}

std::size_t PosteriorDraws::column_index(const std::string& name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw UsageError("unknown draw column '" + name + "'");
  return static_cast<std::size_t>(it - columns.begin());
}

std::vector<double> PosteriorDraws::column(const std::string& name) const {
  const std::size_t j = column_index(name);
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r[j]);
  return out;
}

}  // namespace cloglog
