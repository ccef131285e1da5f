// Copyright 2026 The vocalsim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef VOCALSIM_TESTS_ORACLES_HPP_
#define VOCALSIM_TESTS_ORACLES_HPP_

// Independent reference implementations used by the unit tests and the
// acceptance runner. None of these call the code paths they check.

#include <span>
#include <string>
#include <vector>

#include "vocalsim/corpus.hpp"
#include "vocalsim/encoder.hpp"
#include "vocalsim/evaluation.hpp"
#include "vocalsim/retrieval.hpp"
#include "vocalsim/training.hpp"

namespace vocalsim::testing {

/// Log-mel energies by direct O(N^2) DFT with an independently built
/// filterbank; frames x 64, row-major.
std::vector<double> direct_dft_log_mel(std::span<const float> samples);

/// Batch-mean InfoNCE straight from the definition, no max subtraction.
double unstabilized_infonce(const Matrix& logits);

/// Rank of the positive among all candidates by full sort (1 = best);
/// ties resolved in the positive's favour.
std::size_t brute_force_rank(double positive, std::span<const double> distractors);

/// Clips of `artists` artists scattered around per-artist centers; gender
/// alternates with the artist index.
std::vector<ClipEmbedding> clustered_clips(int artists, int clips_per_artist, int excerpts, int dim,
                                           double spread, std::uint64_t seed);

/// Random instances with N <= 10 candidates: normalized_rank and mnr against
/// a full-sort rank. Returns the number of mismatching instances.
std::size_t mnr_bruteforce_mismatches(std::size_t instances, std::uint64_t seed);

/// Index over `tracks` random embeddings for each model id. Models listed in
/// `clones` reuse the embeddings of the first model.
RetrievalIndex random_index(InputMode mode, std::size_t tracks, std::span<const std::string> models,
                            std::uint64_t seed, std::span<const std::string> clones = {});

/// Track ids "track000".. as used by random_index.
std::vector<std::string> track_ids(std::size_t n);

struct GradCheck {
  double max_rel_error = 0.0;      // per tensor, ||numeric - analytic|| / max(||numeric||, ||analytic||)
  std::string worst;               // tensor with the largest error
  double max_elementwise = 0.0;    // diagnostic only: dominated by roundoff on near-zero entries
  std::size_t checked = 0;
};

/// Central differences of batch_gradient's loss against its analytic
/// gradients for every parameter of `state`.
GradCheck finite_difference_check(const ContrastiveBatch& batch, const ModelState& state, double step = 1e-5);

/// Encoder config small enough for exhaustive finite differences.
EncoderConfig toy_encoder();

/// Toy-encoder parameters moved to a generic point: the zero biases of a
/// fresh model put ReLU inputs exactly on their kink, and the 0.1 I bilinear
/// form keeps all logits nearly equal. Jitter removes both.
ModelState generic_toy_state(std::uint64_t seed);

/// Two-pair batch built from short synthetic excerpts through the real mel
/// frontend.
ContrastiveBatch toy_batch(std::uint64_t seed);

/// Small synthetic corpus, split 8:1:1 by artist.
Corpus small_corpus(int artists, int tracks, std::uint64_t seed, double duration = 10.0);

}  // namespace vocalsim::testing

#endif  // VOCALSIM_TESTS_ORACLES_HPP_
