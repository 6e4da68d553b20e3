#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace ncp {

// Input or model violates a documented invariant.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A configured enumeration, path or memory cap would be exceeded.
class ResourceError : public std::runtime_error {
 public:
  ResourceError(std::string module, const std::string& what)
      : std::runtime_error(module + ": " + what), module_(std::move(module)) {}
  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

// The chain does not satisfy the Doeblin condition (no strictly positive power).
class CertificationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Collected configuration faults; what() joins them one per line.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> faults)
      : std::runtime_error(join(faults)), faults_(std::move(faults)) {}
  const std::vector<std::string>& faults() const noexcept { return faults_; }

 private:
  static std::string join(const std::vector<std::string>& faults) {
    std::string out;
    for (const auto& f : faults) {
      if (!out.empty()) out += '\n';
      out += f;
    }
    return out;
  }
  std::vector<std::string> faults_;
};

}  // namespace ncp
