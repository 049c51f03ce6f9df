// Copyright 2026 the ltfe authors
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

#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace ltfe {

/// Central-difference gradient checks per module on small seeded instances.
/// Returns the max relative error per module name ("core", "perturb",
/// "temporal", "liquid", "align", "pipeline").
std::map<std::string, double> run_gradcheck_suite(std::uint64_t seed);

}  // namespace ltfe
