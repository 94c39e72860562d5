#pragma once

#include <stdexcept>
#include <string>

namespace thyrsim {

/// Base class for all library errors. `kind()` is a stable machine-readable tag.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}
    [[nodiscard]] const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define THYRSIM_DEFINE_ERROR(Name)                                          \
    class Name : public Error {                                             \
    public:                                                                 \
        explicit Name(const std::string& what) : Error(#Name, what) {}      \
    }

// models
THYRSIM_DEFINE_ERROR(DegenerateVoltage);
THYRSIM_DEFINE_ERROR(OutOfRange);
THYRSIM_DEFINE_ERROR(CommutationFailure);
THYRSIM_DEFINE_ERROR(NonConverged);
THYRSIM_DEFINE_ERROR(InvalidParameter);

// dae
THYRSIM_DEFINE_ERROR(CompositionError);
THYRSIM_DEFINE_ERROR(DanglingConnection);
THYRSIM_DEFINE_ERROR(UnitMismatch);
THYRSIM_DEFINE_ERROR(NoConvergence);
THYRSIM_DEFINE_ERROR(StepFailure);
THYRSIM_DEFINE_ERROR(AlgebraicSolveFailure);

// ssa
THYRSIM_DEFINE_ERROR(SingularAzz);
THYRSIM_DEFINE_ERROR(NonEquilibrium);
THYRSIM_DEFINE_ERROR(EigenFailure);

// scan / compare
THYRSIM_DEFINE_ERROR(NotSettled);
THYRSIM_DEFINE_ERROR(NonlinearResponse);
THYRSIM_DEFINE_ERROR(WindowMismatch);
THYRSIM_DEFINE_ERROR(GridMismatch);

// cli
THYRSIM_DEFINE_ERROR(ConfigError);

#undef THYRSIM_DEFINE_ERROR

} // namespace thyrsim
