#pragma once

// CSV dataset loading (header `y,x1[,x2,...]`) and writing, with
// line-numbered parse errors.

#include <string>

#include "starcm/model.hpp"

namespace starcm {

class CsvError : public std::runtime_error {
public:
    CsvError(const std::string& what, int line)
        : std::runtime_error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

// Parses `y,x1[,...]` text into a Sample. Throws CsvError on malformed
// headers, non-numeric or non-finite fields, or ragged rows.
Sample read_sample_csv(const std::string& text);

// Reads the file and delegates to read_sample_csv. Throws CsvError with
// line 0 when the file cannot be opened.
Sample read_sample_csv_file(const std::string& path);

// `y,x1[,...]` text for a sample.
std::string write_sample_csv(const Sample& sample);

}  // namespace starcm
