#include "smp/manifest.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace smp {

std::string file_checksum(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checksum: cannot open " + path);
    std::uint64_t h = 1469598103934665603ull;
    char buf[1 << 14];
    while (in) {
        in.read(buf, sizeof(buf));
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
    }
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
    return hex;
}

RunManifest::RunManifest(nlohmann::json config_echo) : config_echo_(std::move(config_echo)) {}

void RunManifest::add_check(const std::string& name, bool pass) { checks_.emplace_back(name, pass); }

void RunManifest::add_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw std::runtime_error("manifest: missing output file " + path);
    nlohmann::json f;
    f["path"] = path;
    f["bytes"] = static_cast<std::uint64_t>(in.tellg());
    f["fnv1a64"] = file_checksum(path);
    files_.push_back(std::move(f));
}

bool RunManifest::all_passed() const {
    for (const auto& [name, pass] : checks_)
        if (!pass) return false;
    return true;
}

void RunManifest::write(const std::string& path) const {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["version"] = "smplab 0.1.0";
    j["config"] = config_echo_;
    j["wall_seconds"] = wall_seconds_;
    nlohmann::json checks = nlohmann::json::array();
    for (const auto& [name, pass] : checks_) checks.push_back({{"name", name}, {"pass", pass}});
    j["checks"] = checks;
    j["files"] = files_;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("manifest: cannot write " + path);
    out << j.dump(2) << "\n";
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& columns)
    : path_(path), n_cols_(columns.size()) {
    for (size_t i = 0; i < columns.size(); ++i) {
        if (i) buffer_ += ",";
        buffer_ += columns[i];
    }
    buffer_ += "\n";
}

void CsvWriter::row(const std::vector<double>& values) {
    if (values.size() != n_cols_) throw std::invalid_argument("CsvWriter: column count mismatch");
    for (size_t i = 0; i < values.size(); ++i) {
        if (i) buffer_ += ",";
        buffer_ += format_double(values[i]);
    }
    buffer_ += "\n";
}

CsvWriter::~CsvWriter() {
    std::ofstream out(path_);
    if (out) out << buffer_;
}

void write_csv_schema(const std::string& dir, const std::vector<CsvTableDoc>& tables) {
    nlohmann::json j;
    j["schema_version"] = 1;
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& t : tables)
        arr.push_back({{"file", t.file}, {"description", t.description}, {"columns", t.columns}});
    j["tables"] = arr;
    std::ofstream out(dir + "/csv_schema.json");
    if (!out) throw std::runtime_error("cannot write csv schema in " + dir);
    out << j.dump(2) << "\n";
}

}  // namespace smp
