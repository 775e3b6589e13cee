#pragma once

#include <stdexcept>
#include <string>

namespace qmel {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define QMEL_ERROR(Name)                                   \
    class Name : public Error {                            \
    public:                                                \
        explicit Name(const std::string& what)             \
            : Error(std::string(#Name) + ": " + what) {}   \
    }

QMEL_ERROR(SlopeSumError);
QMEL_ERROR(SlopeRangeError);
QMEL_ERROR(PartitionAlignmentError);
QMEL_ERROR(NotDecomposableError);
QMEL_ERROR(DigitRangeError);
QMEL_ERROR(NegativeWeightError);
QMEL_ERROR(InconsistentMeasureError);
QMEL_ERROR(SizeError);
QMEL_ERROR(DepthError);
QMEL_ERROR(DimensionError);
QMEL_ERROR(NotTpError);
QMEL_ERROR(IntegrationError);
QMEL_ERROR(DeltaTooLargeError);
QMEL_ERROR(ConvergenceError);
QMEL_ERROR(AlignmentError);
QMEL_ERROR(NormConvergenceError);
QMEL_ERROR(ResidualError);
QMEL_ERROR(NotEigenvectorError);
QMEL_ERROR(NotEigenstateError);
QMEL_ERROR(PrecondError);
QMEL_ERROR(InvalidArgument);
QMEL_ERROR(IoError);

#undef QMEL_ERROR

}  // namespace qmel
