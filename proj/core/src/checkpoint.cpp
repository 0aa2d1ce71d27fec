#include "tips/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <fmt/format.h>

#include "json.hpp"
#include "tips/errors.hpp"

namespace tips {

static_assert(std::endian::native == std::endian::little, "checkpoints assume little endian");

void save_checkpoint(const std::filesystem::path& dir, const ParamRegistry& params,
                     const CheckpointManifest& manifest) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json j;
  j["format"] = "tips-checkpoint-1";
  j["train_hash"] = manifest.train_hash;
  j["mode"] = manifest.mode;
  j["backbone"] = manifest.backbone;
  j["dims"] = {{"n_items", manifest.dims.n_items},
               {"dim", manifest.dims.dim},
               {"heads", manifest.dims.heads},
               {"max_len", manifest.dims.max_len},
               {"query_self_attention", manifest.dims.query_self_attention}};
  j["gap_normalizer"] = {{"log_min", manifest.gaps.log_min()},
                         {"log_max", manifest.gaps.log_max()},
                         {"slack", manifest.gaps.slack()}};
  j["best_epoch"] = manifest.best_epoch;
  j["best_val_hr10"] = manifest.best_val_hr10;
  nlohmann::ordered_json list = nlohmann::ordered_json::array();

  std::ofstream bin(dir / "params.bin", std::ios::binary);
  if (!bin) throw DataError(fmt::format("cannot write '{}'", (dir / "params.bin").string()));
  std::size_t offset = 0;
  for (const auto& [name, p] : params.items()) {
    list.push_back({{"name", name},
                    {"rows", p.value.rows()},
                    {"cols", p.value.cols()},
                    {"offset", offset},
                    {"trainable", p.trainable}});
    bin.write(reinterpret_cast<const char*>(p.value.data().data()),
              static_cast<std::streamsize>(p.value.size() * sizeof(double)));
    offset += p.value.size();
  }
  j["params"] = list;
  std::ofstream out(dir / "manifest.json");
  if (!out) throw DataError(fmt::format("cannot write '{}'", (dir / "manifest.json").string()));
  out << j.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw DataError(fmt::format("no checkpoint manifest in '{}'", dir.string()));
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(fmt::format("bad checkpoint manifest: {}", e.what()));
  }
  Checkpoint cp;
  try {
    if (j.at("format") != "tips-checkpoint-1") throw DataError("unknown checkpoint format");
    auto& m = cp.manifest;
    m.train_hash = j.at("train_hash").get<std::string>();
    m.mode = j.at("mode").get<std::string>();
    m.backbone = j.at("backbone").get<std::string>();
    const auto& d = j.at("dims");
    m.dims.n_items = d.at("n_items").get<std::size_t>();
    m.dims.dim = d.at("dim").get<std::size_t>();
    m.dims.heads = d.at("heads").get<std::size_t>();
    m.dims.max_len = d.at("max_len").get<std::size_t>();
    m.dims.query_self_attention = d.at("query_self_attention").get<bool>();
    const auto& g = j.at("gap_normalizer");
    m.gaps = GapNormalizer(g.at("log_min").get<double>(), g.at("log_max").get<double>(),
                           g.at("slack").get<double>());
    m.best_epoch = j.at("best_epoch").get<std::size_t>();
    m.best_val_hr10 = j.at("best_val_hr10").get<double>();

    std::ifstream bin(dir / "params.bin", std::ios::binary);
    if (!bin) throw DataError(fmt::format("no params.bin in '{}'", dir.string()));
    std::vector<char> bytes((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
    for (const auto& e : j.at("params")) {
      const auto rows = e.at("rows").get<std::size_t>();
      const auto cols = e.at("cols").get<std::size_t>();
      const auto offset = e.at("offset").get<std::size_t>();
      if ((offset + rows * cols) * sizeof(double) > bytes.size()) {
        throw DataError("params.bin is shorter than the manifest says");
      }
      std::vector<double> values(rows * cols);
      std::memcpy(values.data(), bytes.data() + offset * sizeof(double),
                  values.size() * sizeof(double));
      cp.params.add(e.at("name").get<std::string>(), Tensor2(rows, cols, std::move(values)),
                    e.at("trainable").get<bool>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(fmt::format("bad checkpoint manifest: {}", e.what()));
  }
  return cp;
}

}  // namespace tips
