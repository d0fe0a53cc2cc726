#ifndef TRAJVIS_MODEL_IO_HPP
#define TRAJVIS_MODEL_IO_HPP

#include "trajvis/trajectory.hpp"

#include <json.hpp>

#include <filesystem>
#include <stdexcept>
#include <string>

namespace trajvis {

class ModelFormatError : public std::runtime_error {
public:
    enum class Kind { version, checksum, format };

    ModelFormatError(Kind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

/** Hex SHA-256 of a byte string. */
std::string sha256_hex(std::string_view bytes);

/** Hex SHA-256 of a file's contents. */
std::string sha256_file(const std::filesystem::path& path);

nlohmann::json model_to_json(const TrajectoryModel& model);
TrajectoryModel model_from_json(const nlohmann::json& json);

/**
 * Write `{"schema_version", "checksum", "model"}`. The checksum is the SHA-256 of the compact dump of
 * "model". Doubles are written in shortest round-trip form, so loading restores every bit.
 * The file is written to a temporary sibling and renamed into place.
 */
void persist_model(const TrajectoryModel& model, const std::filesystem::path& path);

/** Throws `ModelFormatError` on a schema mismatch, a failed checksum (including truncation) or bad structure. */
TrajectoryModel load_model(const std::filesystem::path& path);

/** Field-by-field equality, comparing doubles by value (NaN never occurs in a fitted model). */
bool identical(const TrajectoryModel& a, const TrajectoryModel& b);

/** Write `contents` to a temporary sibling of `path`, then rename it over `path`. */
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

} // namespace trajvis

#endif
