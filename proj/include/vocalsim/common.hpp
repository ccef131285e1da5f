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

#ifndef VOCALSIM_COMMON_HPP_
#define VOCALSIM_COMMON_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace vocalsim {

inline constexpr int kSampleRate = 16000;

/// Error raised by any library operation. The message is prefixed with
/// "<module>::<op>: " so command-line diagnostics can name where a
/// precondition failed.
class Error : public std::runtime_error {
 public:
  Error(std::string_view module, std::string_view op, const std::string& what);

  const std::string& module() const { return module_; }
  const std::string& op() const { return op_; }

 private:
  std::string module_;
  std::string op_;
};

using Rng = std::mt19937_64;

// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Derives an independent stream seed from a base seed and a path of
/// indices, e.g. derive_seed(seed, {step, minibatch, slot}).
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path);

/// Seed derived from a string tag, for named substreams ("validation", ...).
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag);

/// Uniform integer in [0, n). Implemented on top of the raw engine output so
/// results do not depend on the standard library's distribution code.
std::size_t uniform_index(Rng& rng, std::size_t n);

/// Uniform real in [0, 1) with 53 random bits.
double uniform_unit(Rng& rng);

/// Incremental 64-bit FNV-1a, used for provenance hashes of corpora,
/// checkpoints and configs.
class Fnv1a {
 public:
  Fnv1a& update(const void* data, std::size_t n);
  Fnv1a& update(std::string_view s);
  template <typename T>
  Fnv1a& update_pod(const T& v) {
    return update(&v, sizeof(T));
  }
  std::uint64_t digest() const { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string to_hex(std::uint64_t v);

/// Runs body(i) for i in [0, n) over up to hardware_concurrency workers.
/// Each index is owned by exactly one worker, so callers that write results
/// into slot i get output independent of the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace vocalsim

#endif  // VOCALSIM_COMMON_HPP_
