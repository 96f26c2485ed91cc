#pragma once

#include <stdexcept>
#include <string>

namespace eagle {

// Error classes map 1:1 onto CLI exit codes.
enum class ErrorClass { usage = 2, data = 3, leakage = 4, numeric = 5, io = 6 };

class Error : public std::runtime_error {
public:
    Error(ErrorClass cls, std::string msg)
        : std::runtime_error(std::move(msg)), cls_(cls) {}
    ErrorClass error_class() const { return cls_; }
    int exit_code() const { return static_cast<int>(cls_); }

private:
    ErrorClass cls_;
};

inline Error usage_error(std::string msg)   { return Error(ErrorClass::usage, std::move(msg)); }
inline Error data_error(std::string msg)    { return Error(ErrorClass::data, std::move(msg)); }
inline Error leakage_error(std::string msg) { return Error(ErrorClass::leakage, std::move(msg)); }
inline Error numeric_error(std::string msg) { return Error(ErrorClass::numeric, std::move(msg)); }
inline Error io_error(std::string msg)      { return Error(ErrorClass::io, std::move(msg)); }

}  // namespace eagle
