#pragma once

// Paired (input, target) samples and the CSV manifest that lists them on disk.

#include <cgseg/errors.hpp>
#include <cgseg/image.hpp>
#include <cgseg/pnm.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace cgseg {

struct PairedSample {
  Image input;
  Image target;
  std::string id;
};

struct ManifestRow {
  std::string input_path;
  std::string target_path;
  std::string id;
};

inline std::vector<ManifestRow> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  std::vector<ManifestRow> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (lineno == 1 && line == "input_path,target_path,id") continue;
    std::stringstream ss(line);
    ManifestRow row;
    if (!std::getline(ss, row.input_path, ',') || !std::getline(ss, row.target_path, ',') ||
        !std::getline(ss, row.id)) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected input_path,target_path,id");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write manifest " + path.string());
  out << "input_path,target_path,id\n";
  for (const auto& r : rows) out << r.input_path << ',' << r.target_path << ',' << r.id << '\n';
}

/// Loads every row; relative paths are resolved against the manifest's directory.
inline std::vector<PairedSample> load_samples(const std::filesystem::path& manifest) {
  const auto base = manifest.parent_path();
  std::vector<PairedSample> samples;
  for (const auto& row : read_manifest(manifest)) {
    auto resolve = [&](const std::string& p) {
      std::filesystem::path fp(p);
      return fp.is_absolute() ? fp : base / fp;
    };
    const auto in_path = resolve(row.input_path);
    const auto tg_path = resolve(row.target_path);
    if (!std::filesystem::exists(in_path)) throw DataError("missing input image " + in_path.string());
    if (!std::filesystem::exists(tg_path)) throw DataError("missing target image " + tg_path.string());
    PairedSample s{read_pnm(in_path), read_pnm(tg_path), row.id};
    if (!s.input.same_size(s.target)) throw DataError("sample " + row.id + ": input and target sizes differ");
    samples.push_back(std::move(s));
  }
  return samples;
}

/// Writes samples as <dir>/<id>_input.pgm|ppm and <id>_target.pgm plus manifest.csv.
inline std::vector<ManifestRow> save_samples(const std::filesystem::path& dir, const std::vector<PairedSample>& samples) {
  std::filesystem::create_directories(dir);
  std::vector<ManifestRow> rows;
  for (const auto& s : samples) {
    const std::string in_name = s.id + (s.input.channels == 3 ? "_input.ppm" : "_input.pgm");
    const std::string tg_name = s.id + (s.target.channels == 3 ? "_target.ppm" : "_target.pgm");
    write_pnm(dir / in_name, s.input);
    write_pnm(dir / tg_name, s.target);
    rows.push_back({in_name, tg_name, s.id});
  }
  write_manifest(dir / "manifest.csv", rows);
  return rows;
}

}  // namespace cgseg
