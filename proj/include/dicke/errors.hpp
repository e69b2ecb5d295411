// errors.hpp - exception types shared by every module

#pragma once

#include <stdexcept>
#include <string>

namespace dicke {

// Parameters outside the model's domain (negative coupling, empty basis, ...).
class InvalidParams : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Requested dense storage does not fit the configured capacity.
class CapacityError : public std::length_error {
public:
    using std::length_error::length_error;
};

// LAPACK reported failure or a post-solve check (orthonormality, residual) failed.
class NumericalFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A derived quantity violated a hard consistency bound (e.g. a density-matrix
// population below the clamp threshold).
class NumericalConsistencyError : public NumericalFailure {
public:
    using NumericalFailure::NumericalFailure;
};

// Photon cutoff too small for the requested state or eigenvector window.
class CutoffTooSmall : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Spectral data does not belong to the model/quench it is paired with.
class InvalidPairing : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Closed-form expression evaluated outside its validity range.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Cache file has a bad magic, version, length or checksum.
class CacheCorruption : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Command line or configuration file problem; maps to exit status 1.
class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Filesystem failure; maps to exit status 3.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace dicke
