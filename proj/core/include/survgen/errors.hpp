#pragma once

#include <stdexcept>
#include <string>

namespace survgen {

// Failure taxonomy shared by the library and the CLI. The CLI maps each
// category to a distinct process exit code.
enum class ErrorCategory {
    Shape,      // tensor/feature dimension disagreement
    Param,      // argument outside its documented range
    Batch,      // batch too small for the requested statistic
    Data,       // non-finite or otherwise invalid values in data
    Schema,     // file header/layout mismatch
    Numeric,    // non-finite intermediate (loss blow-up, quadrature divergence)
    Metric,     // metric undefined on this input (e.g. no comparable pairs)
    Io,         // filesystem failure
};

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& what)
        : std::runtime_error(what), category_(category) {}

    ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

inline const char* category_name(ErrorCategory c) {
    switch (c) {
    case ErrorCategory::Shape: return "shape";
    case ErrorCategory::Param: return "param";
    case ErrorCategory::Batch: return "batch";
    case ErrorCategory::Data: return "data";
    case ErrorCategory::Schema: return "schema";
    case ErrorCategory::Numeric: return "numeric";
    case ErrorCategory::Metric: return "metric";
    case ErrorCategory::Io: return "io";
    }
    return "unknown";
}

[[noreturn]] inline void fail(ErrorCategory category, const std::string& what) {
    throw Error(category, what);
}

// Process exit code for the CLI: 0 success, 1 unclassified, 2+ per category.
inline int exit_code(ErrorCategory c) {
    return 2 + static_cast<int>(c);
}

} // namespace survgen
