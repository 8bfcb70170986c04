//
// SPDX-License-Identifier: Apache-2.0
//

#include <algorithm>
#include <numeric>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "flexiflow/metrics.h"

namespace flexiflow {
namespace {
  using Coloring = std::vector<int>;

  /// Replaces each color by the rank of its sort key. Sort keys always start
  /// with the old color, so the new coloring refines the old one and keeps
  /// the cell order.
  template <class Key>
  Coloring rank_by(const std::vector<Key> &keys) {
    std::vector<Key> sorted = keys;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    Coloring out(keys.size());
    for (std::size_t v = 0; v < keys.size(); ++v)
      out[v] = static_cast<int>(
          std::lower_bound(sorted.begin(), sorted.end(), keys[v])
          - sorted.begin());
    return out;
  }

  int num_colors(const Coloring &c) {
    return c.empty() ? 0 : *std::max_element(c.begin(), c.end()) + 1;
  }

  class Labeler {
  public:
    explicit Labeler(const MolecularGraph &g): g_(g), n_(g.num_atoms()) { }

    std::vector<int> run() {
      if (n_ == 0)
        return {};
      std::vector<std::pair<int, int>> init(n_);
      for (int v = 0; v < n_; ++v)
        init[v] = { g_.atoms[v], g_.charges[v] };
      search(rank_by(init));
      return best_order_;
    }

  private:
    Coloring refine(Coloring c) const {
      int k = num_colors(c);
      while (true) {
        std::vector<std::pair<int, std::vector<std::pair<int, int>>>> sig(n_);
        for (int v = 0; v < n_; ++v) {
          sig[v].first = c[v];
          for (int u = 0; u < n_; ++u)
            if (u != v && g_.bonds(v, u) != 0)
              sig[v].second.emplace_back(c[u], g_.bonds(v, u));
          std::sort(sig[v].second.begin(), sig[v].second.end());
        }
        Coloring next = rank_by(sig);
        const int k_next = num_colors(next);
        if (k_next == k)
          return c;
        c = std::move(next);
        k = k_next;
      }
    }

    /// Transposing u and v maps the graph onto itself.
    bool twins(int u, int v) const {
      if (g_.atoms[u] != g_.atoms[v] || g_.charges[u] != g_.charges[v])
        return false;
      for (int w = 0; w < n_; ++w)
        if (w != u && w != v && g_.bonds(u, w) != g_.bonds(v, w))
          return false;
      return true;
    }

    std::vector<int> serialize(const std::vector<int> &order) const {
      std::vector<int> s;
      s.reserve(2 * n_ + n_ * (n_ - 1) / 2);
      for (int v: order)
        s.push_back(g_.atoms[v]);
      for (int v: order)
        s.push_back(g_.charges[v]);
      for (int a = 0; a < n_; ++a)
        for (int b = a + 1; b < n_; ++b)
          s.push_back(g_.bonds(order[a], order[b]));
      return s;
    }

    void search(const Coloring &start) {
      const Coloring c = refine(start);
      if (num_colors(c) == n_) {
        std::vector<int> order(n_);
        for (int v = 0; v < n_; ++v)
          order[c[v]] = v;
        auto s = serialize(order);
        if (!best_ || s < *best_) {
          best_ = std::move(s);
          best_order_ = std::move(order);
        }
        return;
      }

      // First non-singleton cell, by color.
      std::vector<int> size(num_colors(c), 0);
      for (int col: c)
        ++size[col];
      const int target = static_cast<int>(
          std::find_if(size.begin(), size.end(), [](int s) { return s > 1; })
          - size.begin());

      std::vector<int> tried;
      for (int v = 0; v < n_; ++v) {
        if (c[v] != target)
          continue;
        if (std::any_of(tried.begin(), tried.end(),
                        [&](int u) { return twins(u, v); }))
          continue;
        tried.push_back(v);
        std::vector<std::pair<int, int>> keys(n_);
        for (int w = 0; w < n_; ++w)
          keys[w] = { c[w], w == v ? 0 : 1 };
        search(rank_by(keys));
      }
    }

    const MolecularGraph &g_;
    int n_;
    std::optional<std::vector<int>> best_;
    std::vector<int> best_order_;
  };
}  // namespace

std::vector<int> canonical_order(const MolecularGraph &g) {
  return Labeler(g).run();
}

std::string canonical_key(const MolecularGraph &g) {
  const auto order = canonical_order(g);
  const int n = g.num_atoms();
  std::string key = std::to_string(n) + "|";
  for (int k = 0; k < n; ++k) {
    if (k > 0)
      key += '.';
    key += std::to_string(g.atoms[order[k]]);
  }
  key += '|';
  for (int k = 0; k < n; ++k) {
    if (k > 0)
      key += '.';
    key += std::to_string(g.charges[order[k]]);
  }
  key += '|';
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      const int t = g.bonds(order[a], order[b]);
      if (t < 10)
        key += static_cast<char>('0' + t);
      else
        key += "(" + std::to_string(t) + ")";
    }
  }
  return key;
}

MolecularGraph permute_atoms(const MolecularGraph &g,
                             const std::vector<int> &order) {
  const int n = g.num_atoms();
  MolecularGraph out;
  out.atoms.resize(n);
  out.charges.resize(n);
  out.bonds = BondMatrix::Zero(n, n);
  for (int k = 0; k < n; ++k) {
    out.atoms[k] = g.atoms[order[k]];
    out.charges[k] = g.charges[order[k]];
    for (int l = 0; l < n; ++l)
      out.bonds(k, l) = g.bonds(order[k], order[l]);
  }
  out.conformers.reserve(g.conformers.size());
  for (const auto &c: g.conformers) {
    Coords p(n, 3);
    for (int k = 0; k < n; ++k)
      p.row(k) = c.row(order[k]);
    out.conformers.push_back(std::move(p));
  }
  out.representative = g.representative;
  return out;
}

}  // namespace flexiflow
