#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace smp {

/// FNV-1a 64 over a file's bytes; hex string.
std::string file_checksum(const std::string& path);

/// Run record: config echo, pass/fail of the checks the pipeline ran, and an
/// inventory of every output file with checksums. Reruns with the same config
/// and seed reproduce identical inventories (wall time aside).
class RunManifest {
public:
    explicit RunManifest(nlohmann::json config_echo);

    void add_check(const std::string& name, bool pass);
    void add_file(const std::string& path);
    void set_wall_seconds(double s) { wall_seconds_ = s; }
    bool all_passed() const;

    void write(const std::string& path) const;

private:
    nlohmann::json config_echo_;
    double wall_seconds_ = 0.0;
    std::vector<std::pair<std::string, bool>> checks_;
    std::vector<nlohmann::json> files_;
};

/// Minimal CSV writer: fixed 17-significant-digit formatting so artifacts are
/// byte-stable across reruns.
class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& columns);
    ~CsvWriter();
    void row(const std::vector<double>& values);
    const std::string& path() const { return path_; }

private:
    std::string path_;
    std::string buffer_;
    size_t n_cols_;
};

std::string format_double(double v);

struct CsvTableDoc {
    std::string file;
    std::string description;
    std::vector<std::string> columns;
};

/// Emits csv_schema.json describing every CSV artifact a pipeline wrote.
void write_csv_schema(const std::string& dir, const std::vector<CsvTableDoc>& tables);

}  // namespace smp
