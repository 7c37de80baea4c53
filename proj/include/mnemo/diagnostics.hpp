#pragma once

#include <vector>

namespace mnemo::inference {

/// Draws of one scalar, one inner vector per chain. All chains must have equal length.
using ChainDraws = std::vector<std::vector<double>>;

/// Rank-normalized split-chain potential scale reduction: the larger of the bulk
/// (rank-normalized) and tail (folded, rank-normalized) estimates.
/// Throws DiagnosticError with fewer than 2 chains or fewer than 4 draws per chain.
double r_hat(const ChainDraws& chains);

/// Bulk effective sample size: rank-normalized split chains, autocorrelations
/// truncated by Geyer's initial monotone sequence. Same preconditions as r_hat.
double effective_sample_size(const ChainDraws& chains);

/// Nominal Krippendorff alpha. `labels[rater][item]` holds integer category codes;
/// every rater labels every item. Zero expected disagreement yields 1.0.
/// Throws DiagnosticError with fewer than 2 raters, no items, or ragged input.
double krippendorff_alpha_nominal(const std::vector<std::vector<int>>& labels);

}  // namespace mnemo::inference
