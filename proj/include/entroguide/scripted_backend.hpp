#pragma once

// SPDX-License-Identifier: Apache-2.0

#include <cstddef>
#include <fstream>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "entroguide/backend.hpp"

namespace entroguide {

/// Reads a JSONL fixture file, one StepGeneration per line. Blank lines are ignored.
inline std::vector<StepGeneration> load_fixture_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open fixture file: " + path);
  std::vector<StepGeneration> fixtures;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      fixtures.push_back(step_generation_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": bad fixture: " + e.what());
    }
  }
  return fixtures;
}

/// Plays back recorded generations in call order, one per request.
class ScriptedBackend : public Backend {
 public:
  explicit ScriptedBackend(std::vector<StepGeneration> fixtures) : fixtures_(std::move(fixtures)) {}

  StepGeneration generate_step(const GenerationRequest&) override {
    std::lock_guard lock(mu_);
    if (cursor_ >= fixtures_.size()) throw BackendError("fixture exhausted", false);
    StepGeneration g = fixtures_[cursor_++];
    if (g.tokens.empty()) throw BackendError("empty step", false);
    return g;
  }

  std::size_t consumed() const {
    std::lock_guard lock(mu_);
    return cursor_;
  }

  std::size_t size() const { return fixtures_.size(); }

 private:
  std::vector<StepGeneration> fixtures_;
  mutable std::mutex mu_;
  std::size_t cursor_ = 0;
};

}  // namespace entroguide
