#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "compemb/run.hpp"

namespace compemb {

namespace fs = std::filesystem;
using nlohmann::json;

void save_checkpoint(Model& model, const std::string& directory) {
  fs::create_directories(directory);
  json blocks = json::array();
  for (const auto& b : model.parameter_blocks()) {
    const std::string file = b.name + ".bin";
    std::ofstream out(fs::path(directory) / file, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint block '" + file + "'");
    const std::size_t rows = b.values.size() / b.row_width;
    detail::write_u64_le(out, rows);
    detail::write_u64_le(out, b.row_width);
    for (float v : b.values) detail::write_f32_le(out, v);
    if (!out) throw std::runtime_error("write failed for checkpoint block '" + file + "'");
    blocks.push_back({{"name", b.name}, {"file", file}, {"rows", rows}, {"width", b.row_width}, {"sparse", b.sparse}});
  }
  json manifest = {{"schema_version", kSchemaVersion},
                   {"model", to_json(model.config())},
                   {"cardinalities", model.cardinalities()},
                   {"blocks", blocks}};
  std::ofstream out(fs::path(directory) / "manifest.json");
  out << manifest.dump(2) << '\n';
  if (!out) throw std::runtime_error("cannot write checkpoint manifest");
}

void load_checkpoint(Model& model, const std::string& directory) {
  std::ifstream in(fs::path(directory) / "manifest.json");
  if (!in) throw std::runtime_error("no checkpoint manifest in '" + directory + "'");
  const json manifest = json::parse(in);
  if (manifest.at("schema_version").get<int>() != kSchemaVersion) {
    throw std::runtime_error("unsupported checkpoint schema_version");
  }
  if (manifest.at("cardinalities").get<std::vector<Index>>() != model.cardinalities()) {
    throw std::runtime_error("checkpoint cardinalities differ from the model");
  }
  auto blocks = model.parameter_blocks();
  const auto& entries = manifest.at("blocks");
  if (entries.size() != blocks.size()) throw std::runtime_error("checkpoint block count differs from the model");
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    auto& b = blocks[k];
    const auto& e = entries[k];
    if (e.at("name").get<std::string>() != b.name) {
      throw std::runtime_error("checkpoint block " + std::to_string(k) + " is '" + e.at("name").get<std::string>() +
                               "', model expects '" + b.name + "'");
    }
    std::ifstream bin(fs::path(directory) / e.at("file").get<std::string>(), std::ios::binary);
    if (!bin) throw std::runtime_error("missing checkpoint block '" + b.name + "'");
    const auto rows = detail::read_u64_le(bin);
    const auto width = detail::read_u64_le(bin);
    if (width != b.row_width || rows * width != b.values.size()) {
      throw std::runtime_error("checkpoint block '" + b.name + "' has shape " + std::to_string(rows) + "x" +
                               std::to_string(width));
    }
    for (auto& v : b.values) v = detail::read_f32_le(bin);
  }
}

}  // namespace compemb
