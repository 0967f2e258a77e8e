#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace mwh {

inline constexpr double kCertificateTol = 1e-9;

/// One checked inequality lhs ≤ rhs.
struct Certificate {
  std::string name;
  double lhs = 0;
  double rhs = 0;
  double slack = 0;  // rhs - lhs
  bool pass = true;
  bool applicable = true;  // false when a hypothesis fails; never counts as a failure
  std::string detail;
};

inline bool within_tolerance(double lhs, double rhs) {
  return rhs - lhs >= -kCertificateTol * std::max(1.0, rhs);
}

inline Certificate make_certificate(std::string name, double lhs, double rhs, std::string detail = {}) {
  Certificate c;
  c.name = std::move(name);
  c.lhs = lhs;
  c.rhs = rhs;
  c.slack = rhs - lhs;
  c.pass = std::isfinite(lhs) && !std::isnan(rhs) && within_tolerance(lhs, rhs);
  c.detail = std::move(detail);
  return c;
}

inline Certificate inapplicable(std::string name, std::string detail) {
  Certificate c;
  c.name = std::move(name);
  c.applicable = false;
  c.detail = std::move(detail);
  return c;
}

/// Smallest relative slack first: the worst certificate of a per-cube family.
/// Returns an inapplicable certificate named `name` when the list is empty.
inline Certificate worst_of(const std::vector<Certificate>& certs, const std::string& name) {
  if (certs.empty()) return inapplicable(name, "no cubes");
  auto key = [](const Certificate& c) { return c.slack / std::max(1.0, std::abs(c.rhs)); };
  const Certificate* worst = nullptr;
  for (const auto& c : certs) {
    if (!c.applicable) continue;
    if (!worst || (!c.pass && worst->pass) || (c.pass == worst->pass && key(c) < key(*worst)))
      worst = &c;
  }
  if (!worst) return certs.front();
  Certificate out = *worst;
  out.name = name;
  return out;
}

/// Collapses per-cube certificates to the worst one per name, keeping the
/// order in which names first appear.
inline std::vector<Certificate> collapse_by_name(const std::vector<Certificate>& certs) {
  std::vector<std::string> names;
  for (const auto& c : certs)
    if (std::find(names.begin(), names.end(), c.name) == names.end()) names.push_back(c.name);
  std::vector<Certificate> out;
  for (const auto& n : names) {
    std::vector<Certificate> group;
    for (const auto& c : certs)
      if (c.name == n) group.push_back(c);
    out.push_back(worst_of(group, n));
  }
  return out;
}

}  // namespace mwh
