#include "starcm/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace starcm {

namespace {

std::vector<std::string> split_commas(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream is(line);
    while (std::getline(is, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

std::string trimmed(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    size_t b = s.find_last_not_of(" \t\r");
    if (a == std::string::npos) return "";
    return s.substr(a, b - a + 1);
}

}  // namespace

Sample read_sample_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    int lineno = 0;

    if (!std::getline(is, line)) throw CsvError("empty input", 0);
    ++lineno;
    const auto header = split_commas(line);
    if (header.empty() || trimmed(header[0]) != "y")
        throw CsvError("header must start with 'y'", lineno);
    const int k_x = static_cast<int>(header.size()) - 1;
    if (k_x < 1) throw CsvError("header needs at least one x column", lineno);
    for (int j = 1; j <= k_x; ++j)
        if (trimmed(header[j]) != "x" + std::to_string(j))
            throw CsvError("expected column 'x" + std::to_string(j) + "'", lineno);

    std::vector<double> y;
    std::vector<double> xs;
    while (std::getline(is, line)) {
        ++lineno;
        if (trimmed(line).empty()) continue;
        const auto fields = split_commas(line);
        if (static_cast<int>(fields.size()) != k_x + 1)
            throw CsvError("expected " + std::to_string(k_x + 1) + " fields, got " +
                               std::to_string(fields.size()),
                           lineno);
        for (int j = 0; j <= k_x; ++j) {
            const std::string f = trimmed(fields[j]);
            char* end = nullptr;
            const double v = std::strtod(f.c_str(), &end);
            if (f.empty() || end != f.c_str() + f.size() || !std::isfinite(v))
                throw CsvError("non-numeric or non-finite field '" + f + "'", lineno);
            if (j == 0)
                y.push_back(v);
            else
                xs.push_back(v);
        }
    }
    if (y.empty()) throw CsvError("no data rows", lineno);

    Sample s;
    const int n = static_cast<int>(y.size());
    s.y = std::move(y);
    s.X = Matrix(n, k_x);
    for (int t = 0; t < n; ++t)
        for (int j = 0; j < k_x; ++j) s.X(t, j) = xs[static_cast<size_t>(t) * k_x + j];
    return s;
}

Sample read_sample_csv_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw CsvError("cannot open " + path, 0);
    std::ostringstream buf;
    buf << f.rdbuf();
    return read_sample_csv(buf.str());
}

std::string write_sample_csv(const Sample& sample) {
    std::ostringstream os;
    os << "y";
    for (int j = 1; j <= sample.X.cols(); ++j) os << ",x" << j;
    os << "\n";
    char buf[40];
    for (int t = 0; t < sample.n(); ++t) {
        std::snprintf(buf, sizeof buf, "%.17g", sample.y[t]);
        os << buf;
        for (int j = 0; j < sample.X.cols(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", sample.X(t, j));
            os << "," << buf;
        }
        os << "\n";
    }
    return os.str();
}

}  // namespace starcm
