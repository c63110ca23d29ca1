#pragma once

#include <stdexcept>
#include <string>

namespace ssvae {

// Bad or missing input data (files, columns, class counts).
class DataError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

// A loss or gradient went non-finite during training.
class NumericalAbort : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

}  // namespace ssvae
