#pragma once

// Artifact output: CSV tables with a schema comment line, JSON sidecars,
// flat binary fields with a JSON header, and a SHA-256 MANIFEST.

#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "lattice.hpp"

namespace srflab {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr int kCsvSchemaVersion = 1;

/// First line of every CSV: "# srflab-csv schema=<name> version=<v>".
inline std::string csv_schema_line(const std::string& schema)
{
    return "# srflab-csv schema=" + schema + " version=" + std::to_string(kCsvSchemaVersion);
}

/// Writes one table. Doubles are printed with 17 significant digits so that
/// a table round-trips exactly.
class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::string& schema, const std::vector<std::string>& columns)
        : path_(path), out_(path), columns_(columns.size())
    {
        if (!out_) throw IoError("cannot open " + path.string() + " for writing");
        out_ << csv_schema_line(schema) << '\n';
        for (std::size_t i = 0; i < columns.size(); ++i) out_ << (i ? "," : "") << columns[i];
        out_ << '\n';
        out_ << std::setprecision(17);
    }

    template <class... Ts>
    void row(const Ts&... xs)
    {
        std::size_t n = 0;
        ((out_ << (n++ ? "," : "") << cell(xs)), ...);
        finish_row(n);
    }

    void row(const std::vector<double>& xs)
    {
        for (std::size_t i = 0; i < xs.size(); ++i) out_ << (i ? "," : "") << xs[i];
        finish_row(xs.size());
    }

    void close()
    {
        out_.close();
        if (out_.fail()) throw IoError("write failed for " + path_.string());
    }

    const std::filesystem::path& path() const noexcept { return path_; }

private:
    template <class T>
    static const T& cell(const T& x)
    {
        return x;
    }
    static int cell(bool b) { return b ? 1 : 0; }

    void finish_row(std::size_t n)
    {
        if (n != columns_) throw IoError("row width does not match the header of " + path_.string());
        out_ << '\n';
        if (!out_) throw IoError("write failed for " + path_.string());
    }

    std::filesystem::path path_;
    std::ofstream out_;
    std::size_t columns_;
};

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j)
{
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << j.dump(2) << '\n';
    out.close();
    if (out.fail()) throw IoError("write failed for " + path.string());
}

inline nlohmann::json read_json(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed json in " + path.string() + ": " + e.what());
    }
}

/// Field as row-major little-endian float64 in <stem>.bin plus <stem>.json
/// with the grid and any caller metadata.
inline void write_field(const std::filesystem::path& stem, std::span<const double> values, const TorusGeometry& g,
                        nlohmann::json meta = nlohmann::json::object())
{
    if (values.size() != g.cells()) throw GeometryMismatch("field size does not match the grid");
    const auto bin = std::filesystem::path(stem).replace_extension(".bin");
    std::ofstream out(bin, std::ios::binary);
    if (!out) throw IoError("cannot open " + bin.string() + " for writing");
    static_assert(std::endian::native == std::endian::little, "binary fields are written little-endian");
    out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
    out.close();
    if (out.fail()) throw IoError("write failed for " + bin.string());
    meta["format"] = "float64-le-row-major";
    meta["n"] = g.n();
    meta["tau"] = {g.tau().real(), g.tau().imag()};
    meta["data"] = bin.filename().string();
    write_json(std::filesystem::path(stem).replace_extension(".json"), meta);
}

inline void write_field(const std::filesystem::path& stem, const ScalarField& f, nlohmann::json meta = nlohmann::json::object())
{
    const auto v = f.values();
    write_field(stem, v, *f.geometry(), std::move(meta));
}

struct StoredField {
    int n = 0;
    cplx tau;
    std::vector<double> values;
    nlohmann::json meta;
};

inline StoredField read_field(const std::filesystem::path& stem)
{
    StoredField f;
    f.meta = read_json(std::filesystem::path(stem).replace_extension(".json"));
    f.n = f.meta.at("n").get<int>();
    f.tau = {f.meta.at("tau")[0].get<double>(), f.meta.at("tau")[1].get<double>()};
    const auto bin = std::filesystem::path(stem).replace_extension(".bin");
    std::ifstream in(bin, std::ios::binary);
    if (!in) throw IoError("cannot open " + bin.string());
    f.values.resize(static_cast<std::size_t>(f.n) * f.n);
    in.read(reinterpret_cast<char*>(f.values.data()), static_cast<std::streamsize>(f.values.size() * sizeof(double)));
    if (in.gcount() != static_cast<std::streamsize>(f.values.size() * sizeof(double))) {
        throw IoError("truncated field data in " + bin.string());
    }
    return f;
}

/// Hex SHA-256 of a file.
inline std::string sha256_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
        EVP_MD_CTX_free(ctx);
        throw IoError("sha256 unavailable");
    }
    std::array<char, 1 << 16> buf{};
    while (in) {
        in.read(buf.data(), buf.size());
        if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, md.data(), &len);
    EVP_MD_CTX_free(ctx);
    std::ostringstream hex;
    for (unsigned i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    return hex.str();
}

/// Output directory that records every file written through it.
class ArtifactDir {
public:
    explicit ArtifactDir(std::filesystem::path root) : root_(std::move(root))
    {
        std::error_code ec;
        std::filesystem::create_directories(root_, ec);
        if (ec || !std::filesystem::is_directory(root_)) throw IoError("cannot create output directory " + root_.string());
    }

    const std::filesystem::path& root() const noexcept { return root_; }
    const std::vector<std::string>& files() const noexcept { return files_; }

    /// Path for a new artifact; it is listed in the MANIFEST.
    std::filesystem::path file(const std::string& name)
    {
        files_.push_back(name);
        return root_ / name;
    }

    /// Writes MANIFEST in sha256sum format and checks it.
    void write_manifest() const
    {
        const auto path = root_ / "MANIFEST";
        std::ofstream out(path);
        if (!out) throw IoError("cannot open " + path.string() + " for writing");
        for (const auto& f : files_) {
            if (std::filesystem::exists(root_ / f)) out << sha256_file(root_ / f) << "  " << f << '\n';
        }
        out.close();
        if (out.fail()) throw IoError("write failed for " + path.string());
        if (!verify_manifest(root_)) throw IoError("MANIFEST does not validate after write");
    }

    /// True when every entry of root/MANIFEST hashes to the recorded value.
    static bool verify_manifest(const std::filesystem::path& root)
    {
        std::ifstream in(root / "MANIFEST");
        if (!in) return false;
        std::string hash;
        std::string name;
        while (in >> hash >> name) {
            if (!std::filesystem::exists(root / name) || sha256_file(root / name) != hash) return false;
        }
        return true;
    }

private:
    std::filesystem::path root_;
    std::vector<std::string> files_;
};

} // namespace srflab
