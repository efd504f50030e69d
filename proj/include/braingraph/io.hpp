#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "braingraph/matrix.hpp"

namespace braingraph {

// Class index for classification tasks, real value for regression tasks.
using Label = std::variant<std::int64_t, double>;

inline bool is_class_label(const Label& l) { return std::holds_alternative<std::int64_t>(l); }
double label_as_double(const Label& l);

// Mean BOLD signal per ROI: T rows (timepoints) x N columns (ROIs).
struct RoiTimeSeries {
    Matrix data;
    double tr_seconds = 0.72;
    std::string subject_id;
    std::optional<Label> label;

    std::size_t timepoints() const noexcept { return data.rows(); }
    std::size_t rois() const noexcept { return data.cols(); }

    // Throws ValidationError unless T >= 2, N >= 1, tr > 0 and all entries finite.
    void validate() const;
};

// Nuisance regressors: T x K design with one name per column.
struct NuisanceDesign {
    Matrix columns;
    std::vector<std::string> names;

    void validate(std::size_t expected_timepoints) const;
};

enum class SeriesFormat { csv, raw_f64 };

SeriesFormat parse_series_format(const std::string& name);
// Picks the format from the extension: ".csv" or anything else as raw.
SeriesFormat series_format_for(const std::filesystem::path& path);

// Reads a time series; metadata comes from the sidecar "<stem>.json" when
// present (keys: subject_id, tr_seconds, label).
RoiTimeSeries load_timeseries(const std::filesystem::path& path, SeriesFormat format);
// Writes the series and its sidecar manifest.
void save_timeseries(const RoiTimeSeries& ts, const std::filesystem::path& path, SeriesFormat format);

std::filesystem::path sidecar_path(const std::filesystem::path& series_path);

// Raw little-endian matrix blob: 4-byte magic, u32 version, u64 rows,
// u64 cols, rows*cols f64 row-major. "NGTS" for time series, "NGCM" for
// correlation matrices.
inline constexpr std::uint32_t kRawMatrixVersion = 1;
void write_raw_matrix(const Matrix& m, const std::filesystem::path& path, const std::array<char, 4>& magic);
Matrix read_raw_matrix(const std::filesystem::path& path, const std::array<char, 4>& magic);

inline constexpr std::array<char, 4> kTimeSeriesMagic{'N', 'G', 'T', 'S'};
inline constexpr std::array<char, 4> kCorrelationMagic{'N', 'G', 'C', 'M'};

// Parses CSV text (optional non-numeric header line) into a matrix. Used by
// load_timeseries; exposed for in-memory callers and tests.
Matrix parse_csv_matrix(const std::string& text, const std::string& source_name = "<memory>");

// Builds the nuisance design from a T x 6 motion matrix: intercept, linear
// and quadratic trends over [0, 1], the six motion columns and (optionally)
// their backward differences with a zero first row.
NuisanceDesign make_nuisance_design(const Matrix& motion, bool derivative);
// Reads a T x 6 motion file (comma or whitespace separated) and builds the design.
NuisanceDesign load_nuisance(const std::filesystem::path& path, std::size_t timepoints, bool derivative);

struct SyntheticSpec {
    std::size_t n_subjects = 200;
    std::size_t n_rois = 20;
    std::size_t n_timepoints = 176;
    std::size_t n_classes = 2;
    std::size_t block_size = 5;
    double within_block_corr = 0.8;
    double noise_sd = 1.0;
    std::uint64_t seed = 7;

    void validate() const;
};

// Subject i has class i mod n_classes. ROIs in block c = [c*block, (c+1)*block)
// of a class-c subject share a latent signal:
//   x = sqrt(rho) * z_block + sqrt(1 - rho) * eps,  z, eps ~ N(0, noise_sd^2)
// All other ROIs are independent noise with the same variance.
std::vector<RoiTimeSeries> generate_synthetic(const SyntheticSpec& spec);

}  // namespace braingraph
