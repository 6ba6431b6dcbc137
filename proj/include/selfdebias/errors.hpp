#pragma once

#include <stdexcept>
#include <string>

namespace selfdebias {

// Error taxonomy maps onto CLI exit codes: config 2, dependency 3, numerical 4.
class config_error : public std::runtime_error {
public:
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape/size mismatches between tensors or between data and configuration.
class dimension_error : public config_error {
public:
    explicit dimension_error(const std::string& msg) : config_error(msg) {}
};

// Empty or insufficient input data.
class data_error : public config_error {
public:
    explicit data_error(const std::string& msg) : config_error(msg) {}
};

// A pipeline stage was invoked before its upstream artifacts exist or match.
class dependency_error : public std::runtime_error {
public:
    explicit dependency_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure: non-finite values, indefinite matrices, degenerate vectors.
class numerical_error : public std::runtime_error {
public:
    explicit numerical_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace selfdebias
