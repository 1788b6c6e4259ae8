#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace stackemu {

/// Bad input to an operation (index out of range, nonphysical value, bad shape).
class InvalidArgument : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// A configuration that cannot be built into a model; carries every problem found.
class InvalidConfiguration : public std::runtime_error {
  public:
    explicit InvalidConfiguration(const std::string& what, std::vector<std::string> details = {})
        : std::runtime_error(what), details_(std::move(details)) {}

    const std::vector<std::string>& details() const noexcept { return details_; }

  private:
    std::vector<std::string> details_;
};

/// Iterative solve ran out of iterations before reaching its tolerance.
class ConvergenceFailure : public std::runtime_error {
  public:
    ConvergenceFailure(const std::string& what, double last_residual, int iterations)
        : std::runtime_error(what), residual_(last_residual), iterations_(iterations) {}

    double residual() const noexcept { return residual_; }
    int iterations() const noexcept { return iterations_; }

  private:
    double residual_;
    int iterations_;
};

/// NaN or infinity showed up inside a numerical kernel.
class NumericalFailure : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// File read/write failure; the message always names the path.
class IoError : public std::runtime_error {
  public:
    IoError(const std::string& path, const std::string& what)
        : std::runtime_error(path + ": " + what), path_(path) {}

    const std::string& path() const noexcept { return path_; }

  private:
    std::string path_;
};

} // namespace stackemu
