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

// HTTP client for a segmentation service speaking the /segment protocol.

#pragma once

#include <chrono>
#include <cstdlib>
#include <semaphore>
#include <string>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "promptbench/oracle.hpp"

namespace promptbench {

inline constexpr const char* kOracleUrlEnv = "PROMPTBENCH_ORACLE_URL";

struct RemoteOracleConfig {
  std::string url = "http://127.0.0.1:8000";
  int max_in_flight = 4;
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{250};
  std::chrono::seconds timeout{120};
  bool deterministic = true;
};

// Address resolution: PROMPTBENCH_ORACLE_URL wins over the configured url.
inline std::string resolve_oracle_url(const std::string& configured) {
  if (const char* env = std::getenv(kOracleUrlEnv); env && *env) return env;
  return configured;
}

class RemoteOracle final : public SegmenterOracle {
 public:
  explicit RemoteOracle(RemoteOracleConfig cfg)
      : cfg_(std::move(cfg)),
        slots_(static_cast<std::ptrdiff_t>(std::max(1, cfg_.max_in_flight))) {
    if (cfg_.attempts < 1) throw config_error("remote oracle: attempts must be >= 1");
  }

  OracleInfo info() const override {
    return {"remote:" + cfg_.url, cfg_.deterministic};
  }

 protected:
  BinaryMask do_segment(const GrayImage& image, const PromptSet& prompts,
                        std::string_view image_id) const override {
    const std::string body = make_segment_request(image_id, image, prompts).dump();
    slots_.acquire();
    struct Release {
      std::counting_semaphore<>& s;
      ~Release() { s.release(); }
    } release{slots_};

    auto backoff = cfg_.initial_backoff;
    std::string last_error;
    for (int attempt = 1; attempt <= cfg_.attempts; ++attempt) {
      httplib::Client client(cfg_.url);
      client.set_connection_timeout(cfg_.timeout);
      client.set_read_timeout(cfg_.timeout);
      auto res = client.Post("/segment", body, "application/json");
      if (!res) {
        last_error = "transport: " + httplib::to_string(res.error());
      } else if (res->status >= 400 && res->status < 500) {
        // Client errors are not retried.
        throw oracle_error("remote oracle: HTTP " + std::to_string(res->status) +
                           ": " + error_message(res->body));
      } else if (res->status >= 500) {
        last_error = "HTTP " + std::to_string(res->status) + ": " +
                     error_message(res->body);
      } else {
        return parse_response(res->body, image);
      }
      if (attempt < cfg_.attempts) {
        std::this_thread::sleep_for(backoff);
        backoff *= 2;
      }
    }
    throw oracle_error("remote oracle: giving up after " +
                       std::to_string(cfg_.attempts) + " attempts (" +
                       last_error + ")");
  }

 private:
  static std::string error_message(const std::string& body) {
    auto j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_object() && j.contains("error") && j["error"].is_string())
      return j["error"].get<std::string>();
    return body.substr(0, 200);
  }

  static BinaryMask parse_response(const std::string& body,
                                   const GrayImage& image) {
    auto j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded()) throw oracle_error("remote oracle: response is not JSON");
    if (auto err = validate_segment_response(j))
      throw oracle_error("remote oracle: " + *err);
    BinaryMask mask;
    try {
      mask = decode_png_mask(base64_decode(j["mask_png_b64"].get<std::string>()));
    } catch (const Error& e) {
      throw oracle_error(std::string("remote oracle: bad mask: ") + e.what());
    }
    if (mask.width() != image.width() || mask.height() != image.height())
      throw oracle_error("remote oracle: mask dimensions do not match image");
    return mask;
  }

  RemoteOracleConfig cfg_;
  mutable std::counting_semaphore<> slots_;
};

}  // namespace promptbench
