#pragma once

#include <stdexcept>
#include <string>

namespace met {

// Categories map one-to-one onto CLI exit codes (see tools/met_main.cpp).
enum class ErrorCategory { config, data, provider };

class Error : public std::runtime_error {
  public:
    Error(ErrorCategory category, const std::string& what)
        : std::runtime_error(what), category_(category)
    {}

    ErrorCategory category() const noexcept { return category_; }

  private:
    ErrorCategory category_;
};

class ConfigError : public Error {
  public:
    explicit ConfigError(const std::string& what) : Error(ErrorCategory::config, what) {}
};

class DataError : public Error {
  public:
    explicit DataError(const std::string& what) : Error(ErrorCategory::data, what) {}
};

class ProviderError : public Error {
  public:
    explicit ProviderError(const std::string& what) : Error(ErrorCategory::provider, what) {}
};

}  // namespace met
