/*
 * Copyright (c) 2026, The fuseq Authors.  All rights reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>

namespace fuseq {

/// IEEE 754 binary16 conversion, round to nearest even. Overflow saturates
/// to infinity; NaN payloads are kept quiet.
uint16_t float_to_half(float value);
float half_to_float(uint16_t bits);

/// widen(narrow(x)).
inline float round_to_half(float value) {
  return half_to_float(float_to_half(value));
}

}  // namespace fuseq
