#pragma once

#include <iosfwd>
#include <string>

#include "sarsm/rng.hpp"
#include "sarsm/sparse_weights.hpp"

namespace sarsm {

/// Directed adjacency with off-diagonal entries i.i.d. Bernoulli(edge_prob),
/// zero diagonal. Runs in O(nnz) on average via geometric gap sampling, so the
/// whole stream is consumed in row-major order and is deterministic per seed.
SparseWeights gen_bernoulli(Index n, double edge_prob, std::uint64_t seed);

/// Stochastic block model: uniform labels in {1..blocks}, edge probability
/// p_in within a block and p_out across blocks. blocks == 1 reduces exactly to
/// gen_bernoulli(n, p_in, seed).
SparseWeights gen_sbm(Index n, int blocks, double p_in, double p_out, std::uint64_t seed);

/// Standard SBM design: 5 blocks, p_in = n^{-0.4}, p_out = n^{-0.8}.
SparseWeights gen_sbm_default(Index n, std::uint64_t seed);

/// w_ij = a_ij / sum_j' a_ij'. Zero rows stay zero and are counted in
/// zero_rows when provided; the result is flagged row_normalized.
SparseWeights row_normalize(const SparseWeights& adj, Index* zero_rows = nullptr);

/// Drops the listed nodes (e.g. isolated ones) and reindexes the remainder.
SparseWeights drop_nodes(const SparseWeights& adj, const std::vector<Index>& nodes);

/// Row indices with no outgoing edge.
std::vector<Index> isolated_rows(const SparseWeights& adj);

/// Edge-list text, one "i j" pair per line, whitespace- or comma-separated,
/// '#' comments; duplicate edges collapse to one. Node ids are 0-based unless
/// one_based. When expected_n >= 0 every id must be below it (node-id
/// mismatch otherwise); the matrix is sized max(id)+1 or expected_n.
SparseWeights read_edge_list(std::istream& in, bool one_based, Index expected_n = -1);
SparseWeights read_edge_list_file(const std::string& path, bool one_based, Index expected_n = -1);
void write_edge_list(const SparseWeights& adj, std::ostream& out, bool one_based);

}  // namespace sarsm
