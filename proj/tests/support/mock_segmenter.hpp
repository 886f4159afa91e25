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

// In-process HTTP stand-in for the segmentation service. It validates every
// request against the wire schema and answers with the synthetic oracle.

#pragma once

#include <atomic>
#include <functional>
#include <mutex>
#include <string>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "promptbench/oracle.hpp"

namespace promptbench::testing {

class MockSegmenter {
 public:
  // Optional hook: return a status code to fail the call with, or 0 to
  // answer normally. Receives the 1-based request number.
  using FaultFn = std::function<int(int)>;

  explicit MockSegmenter(FaultFn fault = {}) : fault_(std::move(fault)) {
    server_.Post("/segment", [this](const httplib::Request& req, httplib::Response& res) {
      const int n = ++requests_;
      const int now = ++in_flight_;
      {
        std::lock_guard lock(mutex_);
        max_in_flight_ = std::max(max_in_flight_, now);
      }
      handle(n, req, res);
      std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms_));
      --in_flight_;
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockSegmenter() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
  int requests() const { return requests_.load(); }
  int invalid_requests() const { return invalid_.load(); }
  int max_in_flight() const {
    std::lock_guard lock(mutex_);
    return max_in_flight_;
  }
  void set_delay_ms(int ms) { delay_ms_ = ms; }
  // Replaces the response body on success (for malformed-response tests).
  void set_body_override(std::string body) { body_override_ = std::move(body); }

 private:
  void handle(int n, const httplib::Request& req, httplib::Response& res) {
    auto fail = [&](int status, const std::string& msg) {
      res.status = status;
      res.set_content(nlohmann::json{{"error", msg}}.dump(), "application/json");
    };
    auto body = nlohmann::json::parse(req.body, nullptr, false);
    if (body.is_discarded()) {
      ++invalid_;
      return fail(400, "request is not JSON");
    }
    if (auto err = validate_segment_request(body)) {
      ++invalid_;
      return fail(400, *err);
    }
    if (fault_) {
      if (const int status = fault_(n); status != 0) return fail(status, "injected fault");
    }
    if (!body_override_.empty()) {
      res.set_content(body_override_, "application/json");
      return;
    }
    try {
      const GrayImage img =
          decode_png_gray(base64_decode(body["image_png_b64"].get<std::string>()));
      const BinaryMask mask = oracle_.segment(img, prompts_from_request(body));
      res.set_content(nlohmann::json{{"mask_png_b64", base64_encode(encode_png_mask(mask))},
                                     {"model", "mock"}}
                          .dump(),
                      "application/json");
    } catch (const Error& e) {
      fail(422, e.what());
    }
  }

  FaultFn fault_;
  SyntheticOracle oracle_{};
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> requests_{0};
  std::atomic<int> invalid_{0};
  std::atomic<int> in_flight_{0};
  mutable std::mutex mutex_;
  int max_in_flight_ = 0;
  std::atomic<int> delay_ms_{0};
  std::string body_override_;
};

}  // namespace promptbench::testing
