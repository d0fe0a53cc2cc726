#include "trajvis/csv.hpp"
#include "trajvis/cdm.hpp"

namespace trajvis::csv {

std::vector<std::string> split(std::string_view line) {
    std::vector<std::string> fields;
    std::string current;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    current.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                current.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(current));
            current.clear();
        } else {
            current.push_back(c);
        }
    }
    if (quoted) {
        throw std::invalid_argument("unterminated quoted field");
    }
    fields.push_back(std::move(current));
    return fields;
}

std::string escape(std::string_view field) {
    if (field.find_first_of(",\"\n\r") == std::string_view::npos) {
        return std::string(field);
    }
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') {
            out += "\"\"";
        } else {
            out.push_back(c);
        }
    }
    out.push_back('"');
    return out;
}

std::string join(const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) {
            out.push_back(',');
        }
        out += escape(fields[i]);
    }
    return out;
}

Reader::Reader(const std::filesystem::path& path, const std::vector<std::string>& expected_header) :
    in_(path), file_(path.string())
{
    if (!in_) {
        throw IngestError(file_, 0, "cannot open file");
    }
    std::vector<std::string> fields;
    if (!next(fields)) {
        throw IngestError(file_, 0, "missing header");
    }
    header_ = fields;
    if (header_ != expected_header) {
        throw IngestError(file_, line_, "unexpected header, expected '" + join(expected_header) + "'");
    }
}

bool Reader::next(std::vector<std::string>& fields) {
    std::string line;
    while (std::getline(in_, line)) {
        ++line_;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.find_first_not_of(" \t") == std::string::npos) {
            continue;
        }
        try {
            fields = split(line);
        } catch (const std::invalid_argument& e) {
            throw IngestError(file_, line_, e.what());
        }
        return true;
    }
    return false;
}

} // namespace trajvis::csv
