#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "probloc/calibration.hpp"
#include "probloc/synth.hpp"

namespace probloc::cli {

inline constexpr int kSceneSchemaVersion = 1;
inline constexpr int kCalibrationSchemaVersion = 1;

std::string to_string(DeclaredSigmaMode mode);
/// Accepts "exact", "inflated" and "uniform"; throws kInvalidArgument.
DeclaredSigmaMode parse_declared_mode(const std::string& text);

/// Pretty-printed JSON with schema_version, units, generator config, camera
/// and the objects array.
void write_scene(std::ostream& os, const Scene& scene);
/// Throws kSchemaMismatch on a foreign version and kInvalidArgument on a
/// malformed document.
Scene read_scene(std::istream& is);

void write_calibration(std::ostream& os, const CalibrationFit& fit);
CalibrationVector read_calibration(std::istream& is);

/// File helpers; IO failures throw kIo.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& contents);

}  // namespace probloc::cli
