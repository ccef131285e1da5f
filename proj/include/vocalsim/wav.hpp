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

#ifndef VOCALSIM_WAV_HPP_
#define VOCALSIM_WAV_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vocalsim/audio.hpp"

namespace vocalsim {

enum class WavEncoding { kPcm16, kFloat32 };

/// Parses a RIFF/WAVE byte stream. Accepts 16-bit PCM and 32-bit IEEE float,
/// mono, 16 kHz; anything else throws with the offending property named
/// (e.g. "sample rate 44100 Hz", "2 channels").
AudioBuffer decode_wav(const std::vector<std::uint8_t>& bytes);
AudioBuffer read_wav(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_wav(const AudioBuffer& buffer,
                                     WavEncoding encoding = WavEncoding::kFloat32);
void write_wav(const std::filesystem::path& path, const AudioBuffer& buffer,
               WavEncoding encoding = WavEncoding::kFloat32);

}  // namespace vocalsim

#endif  // VOCALSIM_WAV_HPP_
