#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace mdpo {

// Invalid arguments are reported with std::invalid_argument. The types below
// cover the remaining failure kinds callers need to tell apart.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reward-model training loss rose for several consecutive epochs.
class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

/// A generation or scoring backend gave up after exhausting its retries.
class BackendError : public Error {
 public:
  using Error::Error;
};

/// Output location already holds artifacts and overwriting was not forced.
class RefusalError : public Error {
 public:
  using Error::Error;
};

/// A pipeline stage failed. Carries the stage name, the stages that completed
/// before it, and the results the stage finished before failing (JSONL).
class StageFailed : public Error {
 public:
  StageFailed(std::string stage, std::vector<std::string> completed, const std::string& what,
              std::string partial_jsonl = {})
      : Error("stage '" + stage + "' failed: " + what),
        stage_(std::move(stage)),
        completed_(std::move(completed)),
        partial_(std::move(partial_jsonl)) {}

  const std::string& stage() const noexcept { return stage_; }
  const std::vector<std::string>& completed_stages() const noexcept { return completed_; }
  const std::string& partial_jsonl() const noexcept { return partial_; }

 private:
  std::string stage_;
  std::vector<std::string> completed_;
  std::string partial_;
};

}  // namespace mdpo
