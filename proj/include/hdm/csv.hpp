#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace hdm {

/// RFC-4180 field quoting: wraps in double quotes when the field holds a
/// comma, quote, CR or LF, doubling embedded quotes.
std::string csv_quote(std::string_view field);

/// Shortest round-trip decimal text ('.' separator, locale independent).
std::string format_number(double value);

/// Builds CSV text with CRLF line endings.
class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header);

    void add_row(const std::vector<std::string>& fields);
    std::size_t rows() const { return rows_; }
    const std::string& text() const { return text_; }

private:
    std::size_t columns_;
    std::size_t rows_ = 0;
    std::string text_;
};

/// Parses RFC-4180 text into rows of fields.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

/// Writes via a temporary sibling and rename so readers never see a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

}  // namespace hdm
