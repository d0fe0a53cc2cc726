#ifndef TRAJVIS_CSV_HPP
#define TRAJVIS_CSV_HPP

#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace trajvis::csv {

/** Split one CSV record. Double-quoted fields may contain commas and doubled quotes. */
std::vector<std::string> split(std::string_view line);

/** Quote a field only if it needs it. */
std::string escape(std::string_view field);

std::string join(const std::vector<std::string>& fields);

/**
 * Line-oriented reader that tracks 1-based line numbers and skips blank lines.
 * The header is read on construction and checked against `expected_header`.
 */
class Reader {
public:
    Reader(const std::filesystem::path& path, const std::vector<std::string>& expected_header);

    /** Next record, or false at end of file. */
    bool next(std::vector<std::string>& fields);

    std::size_t line() const { return line_; }
    const std::string& file() const { return file_; }
    const std::vector<std::string>& header() const { return header_; }

private:
    std::ifstream in_;
    std::string file_;
    std::size_t line_ = 0;
    std::vector<std::string> header_;
};

} // namespace trajvis::csv

#endif
