#pragma once

#include <stdexcept>
#include <string>

namespace novelrate {

// Base for everything thrown by this library.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct MalformedRow : Error {
    long line;
    MalformedRow(const std::string& msg, long line_no)
        : Error(msg + " (line " + std::to_string(line_no) + ")"), line(line_no) {}
};

struct DuplicateYear : Error {
    explicit DuplicateYear(int year)
        : Error("duplicate year " + std::to_string(year)) {}
};

struct EmptyFile : Error {
    explicit EmptyFile(const std::string& path) : Error("empty file: " + path) {}
};

struct WrongSource : Error {
    explicit WrongSource(const std::string& msg) : Error(msg) {}
};

struct NegativeValue : Error {
    explicit NegativeValue(double v)
        : Error("negative value " + std::to_string(v)) {}
};

struct YearOutOfWindow : Error {
    int year;
    explicit YearOutOfWindow(int y)
        : Error("year " + std::to_string(y) + " outside the data window"), year(y) {}
};

struct IndexCollision : Error {
    explicit IndexCollision(const std::string& msg) : Error(msg) {}
};

struct DomainError : Error {
    explicit DomainError(const std::string& msg) : Error(msg) {}
};

struct Unsupported : Error {
    explicit Unsupported(const std::string& msg) : Error(msg) {}
};

struct NoSolution : Error {
    explicit NoSolution(const std::string& msg) : Error(msg) {}
};

struct NonFiniteValue : Error {
    explicit NonFiniteValue(const std::string& msg) : Error(msg) {}
};

struct DimensionMismatch : Error {
    explicit DimensionMismatch(const std::string& msg) : Error(msg) {}
};

struct NotPositiveDefinite : Error {
    int minor_index;  // first leading minor that failed
    explicit NotPositiveDefinite(int idx)
        : Error("matrix not positive definite at leading minor " + std::to_string(idx)),
          minor_index(idx) {}
};

struct DegenerateTriple : Error {
    explicit DegenerateTriple(const std::string& msg) : Error(msg) {}
};

struct TooFewDraws : Error {
    explicit TooFewDraws(const std::string& msg) : Error(msg) {}
};

struct AllDivergent : Error {
    explicit AllDivergent(const std::string& msg) : Error(msg) {}
};

struct EmptyCorpus : Error {
    EmptyCorpus() : Error("empty title corpus") {}
};

struct NonConvergence : Error {
    double grad_norm;
    NonConvergence(const std::string& msg, double gnorm)
        : Error(msg + " (gradient norm " + std::to_string(gnorm) + ")"), grad_norm(gnorm) {}
};

struct MissingPopulation : Error {
    explicit MissingPopulation(const std::string& msg) : Error(msg) {}
};

}  // namespace novelrate
