#pragma once

#include <stdexcept>
#include <string>

namespace snnlm {

// Base of every error raised by the library. `exit_code` is what the CLI
// returns when the error escapes a command.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what, int exit_code = 3)
        : std::runtime_error(what), exit_code_(exit_code) {}
    int exit_code() const noexcept { return exit_code_; }

private:
    int exit_code_;
};

#define SNNLM_DEFINE_ERROR(Name, code)                                         \
    class Name : public Error {                                                \
    public:                                                                    \
        explicit Name(const std::string& what) : Error(what, code) {}          \
    }

SNNLM_DEFINE_ERROR(DimensionError, 1);
SNNLM_DEFINE_ERROR(ArgumentError, 1);
SNNLM_DEFINE_ERROR(PreconditionError, 1);
SNNLM_DEFINE_ERROR(NumericError, 3);
SNNLM_DEFINE_ERROR(InputError, 1);
SNNLM_DEFINE_ERROR(FormatError, 1);
SNNLM_DEFINE_ERROR(ConfigError, 1);
SNNLM_DEFINE_ERROR(ConversionError, 1);
SNNLM_DEFINE_ERROR(AuditError, 1);
SNNLM_DEFINE_ERROR(ContractError, 1);
SNNLM_DEFINE_ERROR(FitError, 2);
SNNLM_DEFINE_ERROR(TrainingError, 3);

#undef SNNLM_DEFINE_ERROR

}  // namespace snnlm
