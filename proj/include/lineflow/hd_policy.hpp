#ifndef LINEFLOW_HD_POLICY_HPP
#define LINEFLOW_HD_POLICY_HPP

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

namespace lineflow {

/// Burst-size tables for the half-duplex online scheme. Entries beyond the
/// stored tables fall back to the backlog rule N = dof, which is also the
/// optimiser's starting point.
struct OnlinePolicy {
  std::vector<int> n1{0};                 // indexed by i1
  std::vector<std::vector<int>> n2{{0}};  // indexed by [i1][i2]
  int window1 = std::numeric_limits<int>::max();
  int window2 = std::numeric_limits<int>::max();

  int burst1(int i1) const {
    if (i1 <= 0) return 0;
    if (i1 < static_cast<int>(n1.size())) return n1[static_cast<size_t>(i1)];
    return i1;
  }
  int burst2(int i1, int i2) const {
    if (i2 <= 0) return 0;
    if (i1 >= 0 && i1 < static_cast<int>(n2.size())) {
      const auto& row = n2[static_cast<size_t>(i1)];
      if (i2 < static_cast<int>(row.size())) return row[static_cast<size_t>(i2)];
    }
    return i2;
  }

  void validate() const {
    if (n1.empty() || n1[0] != 0)
      throw std::invalid_argument("online policy: N1(0) must be 0");
    for (size_t i = 1; i < n1.size(); ++i)
      if (n1[i] < 1) throw std::invalid_argument("online policy: N1(i) must be >= 1 for i >= 1");
    for (const auto& row : n2) {
      if (!row.empty() && row[0] != 0)
        throw std::invalid_argument("online policy: N2(.,0) must be 0");
      for (size_t j = 1; j < row.size(); ++j)
        if (row[j] < 1)
          throw std::invalid_argument("online policy: N2(i,j) must be >= 1 for j >= 1");
    }
    if (window1 < 1 || window2 < 1)
      throw std::invalid_argument("online policy: coding windows must be >= 1");
  }

  /// Backlog policy N = dof over the given table ranges.
  static OnlinePolicy backlog(int r1, int r2a, int r2b) {
    OnlinePolicy p;
    p.n1.resize(static_cast<size_t>(r1) + 1);
    for (int i = 0; i <= r1; ++i) p.n1[static_cast<size_t>(i)] = i;
    p.n2.assign(static_cast<size_t>(r2a) + 1, std::vector<int>(static_cast<size_t>(r2b) + 1));
    for (int i = 0; i <= r2a; ++i)
      for (int j = 0; j <= r2b; ++j) p.n2[static_cast<size_t>(i)][static_cast<size_t>(j)] = j;
    return p;
  }
};

/// Burst-size tables for the batch scheme: N1 over i1 in [1..M1], N2 over
/// (i1 in [0..M1], i2 in [1..M1+M2]). Zero-dof turns are skipped, hence the
/// zero entries at index 0.
struct PolicyTable {
  int m1 = 0;
  int m2 = 0;
  std::vector<int> n1;
  std::vector<std::vector<int>> n2;

  bool operator==(const PolicyTable&) const = default;

  int burst1(int i1) const { return i1 <= 0 ? 0 : n1[static_cast<size_t>(i1)]; }
  int burst2(int i1, int i2) const {
    return i2 <= 0 ? 0 : n2[static_cast<size_t>(i1)][static_cast<size_t>(i2)];
  }

  static PolicyTable backlog(int m1, int m2) {
    PolicyTable t;
    t.m1 = m1;
    t.m2 = m2;
    t.n1.resize(static_cast<size_t>(m1) + 1, 0);
    for (int i = 1; i <= m1; ++i) t.n1[static_cast<size_t>(i)] = i;
    t.n2.assign(static_cast<size_t>(m1) + 1,
                std::vector<int>(static_cast<size_t>(m1 + m2) + 1, 0));
    for (int i = 0; i <= m1; ++i)
      for (int j = 1; j <= m1 + m2; ++j) t.n2[static_cast<size_t>(i)][static_cast<size_t>(j)] = j;
    return t;
  }

  void validate() const {
    if (m1 < 0 || m2 < 0 || (m1 == 0 && m2 == 0))
      throw std::invalid_argument("policy table: M1, M2 must be >= 0 and not both 0");
    if (static_cast<int>(n1.size()) != m1 + 1)
      throw std::invalid_argument("policy table: N1 must cover [0..M1]");
    for (int i = 1; i <= m1; ++i)
      if (n1[static_cast<size_t>(i)] < 1)
        throw std::invalid_argument("policy table: N1(i) must be >= 1 for i >= 1");
    if (static_cast<int>(n2.size()) != m1 + 1)
      throw std::invalid_argument("policy table: N2 must cover i1 in [0..M1]");
    for (const auto& row : n2) {
      if (static_cast<int>(row.size()) != m1 + m2 + 1)
        throw std::invalid_argument("policy table: N2 must cover i2 in [0..M1+M2]");
      for (size_t j = 1; j < row.size(); ++j)
        if (row[j] < 1)
          throw std::invalid_argument("policy table: N2(i1,i2) must be >= 1 for i2 >= 1");
    }
  }

  /// FNV-1a over the table entries; stable across runs.
  uint64_t hash() const {
    uint64_t h = 0xcbf29ce484222325ull;
    const auto eat = [&h](uint64_t v) {
      for (int b = 0; b < 8; ++b) {
        h ^= (v >> (8 * b)) & 0xff;
        h *= 0x100000001b3ull;
      }
    };
    eat(static_cast<uint64_t>(m1));
    eat(static_cast<uint64_t>(m2));
    for (const int v : n1) eat(static_cast<uint64_t>(v));
    for (const auto& row : n2)
      for (const int v : row) eat(static_cast<uint64_t>(v));
    return h;
  }
};

}  // namespace lineflow

#endif  // LINEFLOW_HD_POLICY_HPP
