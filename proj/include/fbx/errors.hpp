#pragma once

#include <stdexcept>
#include <string>

namespace fbx {

// Exit-code families used by the CLI: validation -> 2, numerical -> 3, io -> 4.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& m) : std::runtime_error(m) {}
};
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& m) : std::runtime_error(m) {}
};
struct IoError : std::runtime_error {
    explicit IoError(const std::string& m) : std::runtime_error(m) {}
};

struct InvalidDistribution : ValidationError {
    explicit InvalidDistribution(const std::string& m) : ValidationError("InvalidDistribution: " + m) {}
};
struct OutOfRange : ValidationError {
    explicit OutOfRange(const std::string& m) : ValidationError("OutOfRange: " + m) {}
};
struct ZeroSumViolation : ValidationError {
    explicit ZeroSumViolation(const std::string& m) : ValidationError("ZeroSumViolation: " + m) {}
};
struct WrongChannelFamily : ValidationError {
    explicit WrongChannelFamily(const std::string& m) : ValidationError("WrongChannelFamily: " + m) {}
};
struct SpecViolation : ValidationError {
    explicit SpecViolation(const std::string& m) : ValidationError("SpecViolation: " + m) {}
};
// The weighted per-input increment law differs across inputs, so the exact
// encoder-free converse evaluator does not apply (use the Chebyshev variant).
struct NotInvariant : ValidationError {
    explicit NotInvariant(const std::string& m) : ValidationError("NotInvariant: " + m) {}
};

struct DivergentDensity : NumericalError {
    explicit DivergentDensity(const std::string& m) : NumericalError("DivergentDensity: " + m) {}
};
struct DegenerateDerivatives : NumericalError {
    explicit DegenerateDerivatives(const std::string& m) : NumericalError("DegenerateDerivatives: " + m) {}
};
struct NonConvergence : NumericalError {
    explicit NonConvergence(const std::string& m) : NumericalError("NonConvergence: " + m) {}
};
struct LatticeFailure : NumericalError {
    explicit LatticeFailure(const std::string& m) : NumericalError("LatticeFailure: " + m) {}
};
struct NumericalUnderflow : NumericalError {
    explicit NumericalUnderflow(const std::string& m) : NumericalError("NumericalUnderflow: " + m) {}
};
struct SupportOverflow : NumericalError {
    explicit SupportOverflow(const std::string& m) : NumericalError("SupportOverflow: " + m) {}
};
struct TruncationMassExceeded : NumericalError {
    explicit TruncationMassExceeded(const std::string& m) : NumericalError("TruncationMassExceeded: " + m) {}
};
struct NoFeasibleM : NumericalError {
    explicit NoFeasibleM(const std::string& m) : NumericalError("NoFeasibleM: " + m) {}
};
struct NoFeasibleGamma : NumericalError {
    explicit NoFeasibleGamma(const std::string& m) : NumericalError("NoFeasibleGamma: " + m) {}
};
struct InfeasibleEpsilon : NumericalError {
    explicit InfeasibleEpsilon(const std::string& m) : NumericalError("InfeasibleEpsilon: " + m) {}
};
struct BlocklengthTooSmall : NumericalError {
    explicit BlocklengthTooSmall(const std::string& m) : NumericalError("BlocklengthTooSmall: " + m) {}
};
struct OrderingViolation : NumericalError {
    explicit OrderingViolation(const std::string& m) : NumericalError("OrderingViolation: " + m) {}
};

} // namespace fbx
