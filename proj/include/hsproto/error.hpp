#ifndef HSPROTO_ERROR_HPP
#define HSPROTO_ERROR_HPP

#include <stdexcept>
#include <string>

namespace hsproto {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid values or shapes passed to an operation.
struct ArgumentError : Error {
    using Error::Error;
};

// Malformed cube/manifest/checkpoint content.
struct DecodeError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

// Config-digest mismatch between artifacts that must belong together.
struct DigestError : Error {
    using Error::Error;
};

// Evaluation-protocol violations (support/query overlap, missing classes, ...).
struct ProtocolError : Error {
    using Error::Error;
};

// Divergence or non-finite values during optimization.
struct TrainingError : Error {
    using Error::Error;
};

}  // namespace hsproto

#endif
