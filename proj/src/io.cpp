#include "braingraph/io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "braingraph/error.hpp"
#include "braingraph/random.hpp"
#include "json.hpp"

namespace braingraph {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

double label_as_double(const Label& l) {
    return std::visit([](auto v) { return static_cast<double>(v); }, l);
}

void RoiTimeSeries::validate() const {
    if (data.rows() < 2) throw ValidationError("time series needs at least 2 timepoints, got " + std::to_string(data.rows()));
    if (data.cols() < 1) throw ValidationError("time series needs at least 1 ROI");
    if (!(tr_seconds > 0.0)) throw ValidationError("tr_seconds must be positive");
    for (std::size_t r = 0; r < data.rows(); ++r)
        for (std::size_t c = 0; c < data.cols(); ++c)
            if (!std::isfinite(data(r, c)))
                throw ValidationError("non-finite value at timepoint " + std::to_string(r) + ", ROI " + std::to_string(c));
}

void NuisanceDesign::validate(std::size_t expected_timepoints) const {
    if (columns.rows() != expected_timepoints)
        throw DimensionError("nuisance design has " + std::to_string(columns.rows()) + " rows, expected " +
                             std::to_string(expected_timepoints));
    if (columns.cols() < 1) throw DimensionError("nuisance design has no columns");
    if (names.size() != columns.cols()) throw DimensionError("nuisance design names do not match column count");
    if (!columns.all_finite()) throw ValidationError("nuisance design contains non-finite values");
}

SeriesFormat parse_series_format(const std::string& name) {
    if (name == "csv") return SeriesFormat::csv;
    if (name == "raw" || name == "raw-f64" || name == "f64") return SeriesFormat::raw_f64;
    throw ValidationError("unknown series format '" + name + "'");
}

SeriesFormat series_format_for(const fs::path& path) {
    return path.extension() == ".csv" ? SeriesFormat::csv : SeriesFormat::raw_f64;
}

fs::path sidecar_path(const fs::path& series_path) {
    fs::path p = series_path;
    p.replace_extension(".json");
    return p;
}

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    if (line.find(',') != std::string_view::npos) {
        std::size_t start = 0;
        while (true) {
            const std::size_t pos = line.find(',', start);
            out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
            if (pos == std::string_view::npos) break;
            start = pos + 1;
        }
    } else {
        std::size_t i = 0;
        while (i < line.size()) {
            while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
            const std::size_t start = i;
            while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
            if (i > start) out.push_back(line.substr(start, i - start));
        }
    }
    return out;
}

bool parse_double(std::string_view s, double& out) {
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size() && !s.empty();
}

void write_bytes(std::ofstream& out, const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

Label label_from_json(const json& j) {
    if (j.is_number_integer() || j.is_number_unsigned()) return Label{j.get<std::int64_t>()};
    if (j.is_number_float()) return Label{j.get<double>()};
    throw ValidationError("sidecar label must be a number");
}

}  // namespace

Matrix parse_csv_matrix(const std::string& text, const std::string& source_name) {
    std::vector<std::vector<double>> rows;
    std::size_t line_no = 0;
    std::size_t width = 0;
    std::istringstream in(text);
    std::string raw;
    bool first_content_line = true;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string_view line = trim(raw);
        if (line.empty()) continue;
        const auto fields = split_fields(line);
        std::vector<double> values(fields.size());
        bool numeric = true;
        std::size_t bad_field = 0;
        for (std::size_t f = 0; f < fields.size(); ++f) {
            if (!parse_double(fields[f], values[f])) {
                numeric = false;
                bad_field = f;
                break;
            }
        }
        if (!numeric) {
            if (first_content_line) {
                // header line
                first_content_line = false;
                width = fields.size();
                continue;
            }
            throw ParseError(source_name + ": malformed number '" + std::string(fields[bad_field]) + "'", line_no,
                             bad_field + 1);
        }
        first_content_line = false;
        if (width == 0) width = values.size();
        if (values.size() != width)
            throw ParseError(source_name + ": expected " + std::to_string(width) + " fields, found " +
                                 std::to_string(values.size()),
                             line_no, std::min(values.size(), width) + 1);
        for (std::size_t f = 0; f < values.size(); ++f)
            if (!std::isfinite(values[f]))
                throw ValidationError(source_name + ": non-finite value (row " + std::to_string(line_no) +
                                      ", column " + std::to_string(f + 1) + ")");
        rows.push_back(std::move(values));
    }
    if (rows.empty()) throw ParseError(source_name + ": no numeric rows", line_no, 0);
    return Matrix::from_rows(rows);
}

void write_raw_matrix(const Matrix& m, const fs::path& path, const std::array<char, 4>& magic) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    const std::uint32_t version = kRawMatrixVersion;
    const std::uint64_t rows = m.rows();
    const std::uint64_t cols = m.cols();
    write_bytes(out, magic.data(), 4);
    write_bytes(out, &version, sizeof version);
    write_bytes(out, &rows, sizeof rows);
    write_bytes(out, &cols, sizeof cols);
    write_bytes(out, m.data(), m.size() * sizeof(double));
    if (!out) throw IoError("write failed for " + path.string());
}

Matrix read_raw_matrix(const fs::path& path, const std::array<char, 4>& magic) {
    const std::string bytes = read_file(path);
    constexpr std::size_t header = 4 + 4 + 8 + 8;
    if (bytes.size() < header) throw ParseError(path.string() + ": truncated header", 0, 0);
    if (std::memcmp(bytes.data(), magic.data(), 4) != 0)
        throw ParseError(path.string() + ": bad magic, expected " + std::string(magic.data(), 4), 0, 0);
    std::uint32_t version;
    std::uint64_t rows, cols;
    std::memcpy(&version, bytes.data() + 4, 4);
    std::memcpy(&rows, bytes.data() + 8, 8);
    std::memcpy(&cols, bytes.data() + 16, 8);
    if (version != kRawMatrixVersion)
        throw VersionError(path.string() + ": unsupported raw matrix version " + std::to_string(version));
    if (cols != 0 && rows > (bytes.size() - header) / sizeof(double) / cols)
        throw ParseError(path.string() + ": payload shorter than header dimensions", rows, cols);
    if (bytes.size() != header + rows * cols * sizeof(double))
        throw ParseError(path.string() + ": payload size does not match header dimensions", rows, cols);
    Matrix m(rows, cols);
    std::memcpy(m.data(), bytes.data() + header, rows * cols * sizeof(double));
    return m;
}

RoiTimeSeries load_timeseries(const fs::path& path, SeriesFormat format) {
    if (!fs::exists(path)) throw IoError("no such file: " + path.string());
    RoiTimeSeries ts;
    if (format == SeriesFormat::csv) {
        ts.data = parse_csv_matrix(read_file(path), path.string());
    } else {
        ts.data = read_raw_matrix(path, kTimeSeriesMagic);
    }
    ts.subject_id = path.stem().string();
    const fs::path sidecar = sidecar_path(path);
    if (fs::exists(sidecar)) {
        json j;
        try {
            j = json::parse(read_file(sidecar));
        } catch (const json::parse_error& e) {
            throw ParseError(sidecar.string() + ": " + e.what(), 0, 0);
        }
        if (j.contains("subject_id")) ts.subject_id = j.at("subject_id").get<std::string>();
        if (j.contains("tr_seconds")) ts.tr_seconds = j.at("tr_seconds").get<double>();
        if (j.contains("label") && !j.at("label").is_null()) ts.label = label_from_json(j.at("label"));
    }
    ts.validate();
    return ts;
}

void save_timeseries(const RoiTimeSeries& ts, const fs::path& path, SeriesFormat format) {
    ts.validate();
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    if (format == SeriesFormat::csv) {
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw IoError("cannot write " + path.string());
        char buf[32];
        for (std::size_t r = 0; r < ts.data.rows(); ++r) {
            for (std::size_t c = 0; c < ts.data.cols(); ++c) {
                std::snprintf(buf, sizeof buf, "%.17g", ts.data(r, c));
                if (c) out << ',';
                out << buf;
            }
            out << '\n';
        }
        if (!out) throw IoError("write failed for " + path.string());
    } else {
        write_raw_matrix(ts.data, path, kTimeSeriesMagic);
    }
    json j{{"subject_id", ts.subject_id}, {"tr_seconds", ts.tr_seconds}};
    if (ts.label) {
        std::visit([&](auto v) { j["label"] = v; }, *ts.label);
    } else {
        j["label"] = nullptr;
    }
    std::ofstream side(sidecar_path(path), std::ios::trunc);
    if (!side) throw IoError("cannot write " + sidecar_path(path).string());
    side << j.dump(2) << '\n';
}

NuisanceDesign make_nuisance_design(const Matrix& motion, bool derivative) {
    constexpr std::size_t kMotionColumns = 6;
    if (motion.cols() != kMotionColumns)
        throw DimensionError("motion parameters must have 6 columns, got " + std::to_string(motion.cols()));
    const std::size_t t = motion.rows();
    if (t < 2) throw DimensionError("motion parameters need at least 2 rows");
    const std::size_t k = 3 + kMotionColumns + (derivative ? kMotionColumns : 0);
    NuisanceDesign d;
    d.columns = Matrix(t, k);
    d.names = {"intercept", "linear", "quadratic"};
    for (std::size_t r = 0; r < t; ++r) {
        const double x = static_cast<double>(r) / static_cast<double>(t - 1);
        d.columns(r, 0) = 1.0;
        d.columns(r, 1) = x;
        d.columns(r, 2) = x * x;
        for (std::size_t c = 0; c < kMotionColumns; ++c) {
            d.columns(r, 3 + c) = motion(r, c);
            if (derivative) d.columns(r, 3 + kMotionColumns + c) = r == 0 ? 0.0 : motion(r, c) - motion(r - 1, c);
        }
    }
    for (std::size_t c = 0; c < kMotionColumns; ++c) d.names.push_back("motion" + std::to_string(c));
    if (derivative)
        for (std::size_t c = 0; c < kMotionColumns; ++c) d.names.push_back("dmotion" + std::to_string(c));
    d.validate(t);
    return d;
}

NuisanceDesign load_nuisance(const fs::path& path, std::size_t timepoints, bool derivative) {
    if (!fs::exists(path)) throw IoError("no such file: " + path.string());
    const Matrix motion = parse_csv_matrix(read_file(path), path.string());
    if (motion.rows() != timepoints)
        throw DimensionError(path.string() + ": " + std::to_string(motion.rows()) + " rows of motion parameters, expected " +
                             std::to_string(timepoints));
    return make_nuisance_design(motion, derivative);
}

void SyntheticSpec::validate() const {
    if (n_subjects < 1) throw ValidationError("synthetic: n_subjects must be >= 1");
    if (n_rois < 1) throw ValidationError("synthetic: n_rois must be >= 1");
    if (n_timepoints < 2) throw ValidationError("synthetic: n_timepoints must be >= 2");
    if (n_classes < 1) throw ValidationError("synthetic: n_classes must be >= 1");
    if (block_size < 1) throw ValidationError("synthetic: block_size must be >= 1");
    if (block_size * n_classes > n_rois) throw ValidationError("synthetic: block_size * n_classes exceeds n_rois");
    if (!(within_block_corr > 0.0 && within_block_corr < 1.0))
        throw ValidationError("synthetic: within_block_corr must lie in (0, 1)");
    if (!(noise_sd > 0.0) || !std::isfinite(noise_sd)) throw ValidationError("synthetic: noise_sd must be positive");
}

std::vector<RoiTimeSeries> generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    std::vector<RoiTimeSeries> out;
    out.reserve(spec.n_subjects);
    const double shared = std::sqrt(spec.within_block_corr);
    const double own = std::sqrt(1.0 - spec.within_block_corr);
    const int width = std::max<int>(4, static_cast<int>(std::to_string(spec.n_subjects).size()));
    for (std::size_t s = 0; s < spec.n_subjects; ++s) {
        char id[32];
        std::snprintf(id, sizeof id, "sub%0*zu", width, s);
        Rng rng(derive_seed(spec.seed, id));
        const std::size_t cls = s % spec.n_classes;
        const std::size_t block_lo = cls * spec.block_size;
        const std::size_t block_hi = block_lo + spec.block_size;
        RoiTimeSeries ts;
        ts.subject_id = id;
        ts.label = Label{static_cast<std::int64_t>(cls)};
        ts.data = Matrix(spec.n_timepoints, spec.n_rois);
        for (std::size_t t = 0; t < spec.n_timepoints; ++t) {
            const double z = spec.noise_sd * rng.normal();
            for (std::size_t r = 0; r < spec.n_rois; ++r) {
                const double eps = spec.noise_sd * rng.normal();
                ts.data(t, r) = (r >= block_lo && r < block_hi) ? shared * z + own * eps : eps;
            }
        }
        out.push_back(std::move(ts));
    }
    return out;
}

}  // namespace braingraph
