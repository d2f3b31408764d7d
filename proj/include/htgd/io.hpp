#ifndef HTGD_IO_HPP
#define HTGD_IO_HPP

// CSV reading and writing for datasets, traces and small reports.

#include <charconv>
#include <cstddef>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "htgd/engine.hpp"
#include "htgd/error.hpp"
#include "htgd/models.hpp"

namespace htgd::io {

/// Shortest representation that round-trips a double.
inline std::string format_double(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::vector<std::string> split(std::string_view line, char sep = ',')
{
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t pos = line.find(sep, start);
        std::string_view field = line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
        while (!field.empty() && (field.front() == ' ' || field.front() == '\t'))
            field.remove_prefix(1);
        while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r'))
            field.remove_suffix(1);
        out.emplace_back(field);
        if (pos == std::string_view::npos)
            break;
        start = pos + 1;
    }
    return out;
}

inline double parse_double(std::string_view s)
{
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw InvalidArgument("not a number: '" + std::string(s) + "'");
    return v;
}

/// Writes a dataset as CSV: header of column names, one record per row.
inline void write_dataset_csv(std::ostream& out, const Dataset& data)
{
    for (std::size_t c = 0; c < data.columns.size(); ++c)
        out << (c ? "," : "") << data.columns[c];
    out << '\n';
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (Eigen::Index r = 0; r < data.records.rows(); ++r)
            out << (r ? "," : "") << format_double(data.records(r, static_cast<Eigen::Index>(i)));
        out << '\n';
    }
}

inline void write_dataset_csv(const std::string& path, const Dataset& data)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error("cannot write dataset file '" + path + "'");
    write_dataset_csv(out, data);
    if (!out)
        throw Error("failed while writing dataset file '" + path + "'");
}

inline Dataset read_dataset_csv(std::istream& in)
{
    std::string line;
    if (!std::getline(in, line))
        throw InvalidArgument("dataset CSV: missing header");
    std::vector<std::string> columns = split(line);
    std::vector<std::vector<double>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r")
            continue;
        const auto fields = split(line);
        if (fields.size() != columns.size())
            throw InvalidArgument("dataset CSV: line " + std::to_string(line_no) + " has " + std::to_string(fields.size())
                                  + " fields, expected " + std::to_string(columns.size()));
        std::vector<double> row;
        row.reserve(fields.size());
        for (const auto& f : fields)
            row.push_back(parse_double(f));
        rows.push_back(std::move(row));
    }
    Matrix records(static_cast<Eigen::Index>(columns.size()), static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t c = 0; c < columns.size(); ++c)
            records(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(i)) = rows[i][c];
    return Dataset(std::move(records), std::move(columns));
}

inline Dataset read_dataset_csv(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot read dataset file '" + path + "'");
    return read_dataset_csv(in);
}

/// Streams a trace as `run_id,t,theta_0..theta_{q-1},realized_size`, one
/// row per iteration, flushing each row.
class TraceCsvWriter
{
public:
    TraceCsvWriter(std::ostream& out, std::size_t run_id, std::size_t param_dim, bool header = true)
        : out_(&out), run_id_(run_id)
    {
        if (header) {
            *out_ << "run_id,t";
            for (std::size_t k = 0; k < param_dim; ++k)
                *out_ << ",theta_" << k;
            *out_ << ",realized_size\n";
        }
    }

    void operator()(std::size_t t, const Vector& theta, std::size_t realized_size)
    {
        *out_ << run_id_ << ',' << t;
        for (Eigen::Index k = 0; k < theta.size(); ++k)
            *out_ << ',' << format_double(theta[k]);
        *out_ << ',' << realized_size << '\n';
        out_->flush();
    }

    IterationObserver observer()
    {
        return [this](std::size_t t, const Vector& theta, std::size_t size) { (*this)(t, theta, size); };
    }

private:
    std::ostream* out_;
    std::size_t run_id_;
};

/// Plain-text matrix dump: row-major, space-separated.
inline void write_matrix(const std::string& path, const Matrix& m)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error("cannot write matrix file '" + path + "'");
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            out << (c ? " " : "") << format_double(m(r, c));
        out << '\n';
    }
}

} // namespace htgd::io

#endif // HTGD_IO_HPP
