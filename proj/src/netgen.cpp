#include "sarsm/netgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace sarsm {

namespace {

// Visits each of m slots with probability p by jumping geometric gaps:
// next = pos + 1 + floor(log(1-u)/log(1-p)). Expected cost O(p*m).
template <typename Visit>
void sample_slots(Index m, double p, SplitMix64& rng, Visit&& visit) {
  if (p <= 0.0 || m <= 0) return;
  if (p >= 1.0) {
    for (Index s = 0; s < m; ++s) visit(s);
    return;
  }
  const double log1mp = std::log1p(-p);
  double pos = -1.0;
  for (;;) {
    const double u = rng.uniform01();
    pos += 1.0 + std::floor(std::log1p(-u) / log1mp);
    if (pos >= static_cast<double>(m)) return;
    visit(static_cast<Index>(pos));
  }
}

void check_prob(double p, const char* what) {
  if (p < 0.0 || p > 1.0 || !std::isfinite(p))
    throw std::invalid_argument(std::string(what) + " must lie in [0, 1]");
}

}  // namespace

SparseWeights gen_bernoulli(Index n, double edge_prob, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("gen_bernoulli: n must be at least 2");
  check_prob(edge_prob, "gen_bernoulli: edge_prob");
  SplitMix64 rng(seed);
  std::vector<Eigen::Triplet<double>> edges;
  edges.reserve(static_cast<std::size_t>(edge_prob * static_cast<double>(n) * (n - 1)) + 16);
  for (Index i = 0; i < n; ++i) {
    // slots 0..n-2 map to columns skipping the diagonal
    sample_slots(n - 1, edge_prob, rng, [&](Index s) {
      const Index j = s < i ? s : s + 1;
      edges.emplace_back(i, j, 1.0);
    });
  }
  return SparseWeights::from_triplets(n, edges);
}

SparseWeights gen_sbm(Index n, int blocks, double p_in, double p_out, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("gen_sbm: n must be at least 2");
  if (blocks < 1) throw std::invalid_argument("gen_sbm: blocks must be >= 1");
  check_prob(p_in, "gen_sbm: p_in");
  check_prob(p_out, "gen_sbm: p_out");
  if (blocks == 1) return gen_bernoulli(n, p_in, seed);

  SplitMix64 rng(seed);
  std::vector<int> label(n);
  std::vector<std::vector<Index>> members(blocks);
  for (Index i = 0; i < n; ++i) {
    label[i] = static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(blocks)));
    members[label[i]].push_back(i);
  }

  std::vector<Eigen::Triplet<double>> edges;
  for (Index i = 0; i < n; ++i) {
    for (int b = 0; b < blocks; ++b) {
      const auto& mem = members[b];
      if (b == label[i]) {
        // own block: slots skip i itself
        const auto self = std::lower_bound(mem.begin(), mem.end(), i) - mem.begin();
        sample_slots(static_cast<Index>(mem.size()) - 1, p_in, rng, [&](Index s) {
          const Index j = mem[s < self ? s : s + 1];
          edges.emplace_back(i, j, 1.0);
        });
      } else {
        sample_slots(static_cast<Index>(mem.size()), p_out, rng,
                     [&](Index s) { edges.emplace_back(i, mem[s], 1.0); });
      }
    }
  }
  return SparseWeights::from_triplets(n, edges);
}

SparseWeights gen_sbm_default(Index n, std::uint64_t seed) {
  const double nd = static_cast<double>(n);
  return gen_sbm(n, 5, std::pow(nd, -0.4), std::pow(nd, -0.8), seed);
}

SparseWeights row_normalize(const SparseWeights& adj, Index* zero_rows) {
  CsrMatrix w = adj.csr();
  Index zeros = 0;
  for (Index i = 0; i < w.rows(); ++i) {
    double s = 0.0;
    for (CsrMatrix::InnerIterator it(w, i); it; ++it) s += it.value();
    if (s == 0.0) {
      ++zeros;
      continue;
    }
    for (CsrMatrix::InnerIterator it(w, i); it; ++it) it.valueRef() /= s;
  }
  if (zero_rows) *zero_rows = zeros;
  return SparseWeights::from_csr(std::move(w), /*row_normalized=*/true);
}

std::vector<Index> isolated_rows(const SparseWeights& adj) {
  std::vector<Index> out;
  const CsrMatrix& w = adj.csr();
  for (Index i = 0; i < w.rows(); ++i)
    if (w.outerIndexPtr()[i + 1] == w.outerIndexPtr()[i]) out.push_back(i);
  return out;
}

SparseWeights drop_nodes(const SparseWeights& adj, const std::vector<Index>& nodes) {
  const Index n = adj.size();
  std::vector<char> dropped(n, 0);
  for (Index k : nodes) {
    if (k < 0 || k >= n) throw std::invalid_argument("drop_nodes: index out of range");
    dropped[k] = 1;
  }
  std::vector<Index> remap(n, -1);
  Index m = 0;
  for (Index i = 0; i < n; ++i)
    if (!dropped[i]) remap[i] = m++;
  std::vector<Eigen::Triplet<double>> kept;
  for (Index i = 0; i < n; ++i) {
    if (dropped[i]) continue;
    for (CsrMatrix::InnerIterator it(adj.csr(), i); it; ++it)
      if (!dropped[it.col()]) kept.emplace_back(remap[i], remap[it.col()], it.value());
  }
  return SparseWeights::from_triplets(m, kept);
}

SparseWeights read_edge_list(std::istream& in, bool one_based, Index expected_n) {
  std::vector<Eigen::Triplet<double>> edges;
  Index max_id = -1;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    long long a = 0, b = 0;
    if (!(ls >> a)) continue;  // blank or comment-only line
    if (!(ls >> b))
      throw std::invalid_argument("edge list line " + std::to_string(line_no) +
                                  ": expected two node ids");
    long long extra;
    if (ls >> extra)
      throw std::invalid_argument("edge list line " + std::to_string(line_no) +
                                  ": more than two fields");
    if (one_based) {
      --a;
      --b;
    }
    if (a < 0 || b < 0)
      throw std::invalid_argument("edge list line " + std::to_string(line_no) +
                                  ": node id out of range");
    if (expected_n >= 0 && (a >= expected_n || b >= expected_n))
      throw std::invalid_argument("edge list line " + std::to_string(line_no) + ": node id " +
                                  std::to_string(one_based ? std::max(a, b) + 1 : std::max(a, b)) +
                                  " does not match the covariate table (n = " +
                                  std::to_string(expected_n) + ")");
    if (a == b) continue;  // self-loops are dropped; diagonal stays zero
    max_id = std::max<Index>(max_id, static_cast<Index>(std::max(a, b)));
    edges.emplace_back(static_cast<Index>(a), static_cast<Index>(b), 1.0);
  }
  const Index n = expected_n >= 0 ? expected_n : max_id + 1;
  if (n < 1) throw std::invalid_argument("edge list: no edges found");
  CsrMatrix m(n, n);
  m.setFromTriplets(edges.begin(), edges.end(),
                    [](const double&, const double&) { return 1.0; });  // duplicates collapse
  return SparseWeights::from_csr(std::move(m));
}

SparseWeights read_edge_list_file(const std::string& path, bool one_based, Index expected_n) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open edge list '" + path + "'");
  return read_edge_list(in, one_based, expected_n);
}

void write_edge_list(const SparseWeights& adj, std::ostream& out, bool one_based) {
  const Index off = one_based ? 1 : 0;
  for (Index i = 0; i < adj.size(); ++i)
    for (CsrMatrix::InnerIterator it(adj.csr(), i); it; ++it)
      out << (i + off) << ' ' << (it.col() + off) << '\n';
}

}  // namespace sarsm
