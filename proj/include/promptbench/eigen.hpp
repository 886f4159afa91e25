/* Copyright 2026 The PromptBench Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Eigen include wrapper. <resolv.h> (pulled in by the HTTP client) defines
// `_res` as a macro, which clashes with Eigen parameter names.

#pragma once

#pragma push_macro("_res")
#undef _res
#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>
#pragma pop_macro("_res")
