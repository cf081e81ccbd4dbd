#include "fapm/manifest.hpp"

#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "fapm/error.hpp"

namespace fapm {

using nlohmann::json;

std::string to_string(Split split) { return split == Split::train ? "train" : "test"; }
std::string to_string(Label label) { return label == Label::normal ? "normal" : "anomalous"; }

void DatasetManifest::validate() const {
    if (layers.empty()) fail(ErrorKind::validation, "manifest declares no layers");
    const std::set<int> declared(layers.begin(), layers.end());
    if (declared.size() != layers.size()) fail(ErrorKind::validation, "manifest declares a layer twice");
    std::set<std::string> ids;
    for (const auto& entry : entries) {
        if (!ids.insert(entry.image_id).second)
            fail(ErrorKind::validation, "duplicate image id '" + entry.image_id + "'");
        std::set<int> present;
        for (const auto& [layer, path] : entry.tensors) present.insert(layer);
        if (present != declared)
            fail(ErrorKind::validation, "entry '" + entry.image_id + "' does not reference the declared layer set");
        if (split == Split::train && entry.label == Label::anomalous)
            fail(ErrorKind::validation, "train entry '" + entry.image_id + "' is labelled anomalous");
    }
}

bool DatasetManifest::has_masks() const {
    for (const auto& entry : entries)
        if (entry.mask) return true;
    return false;
}

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : (base / path).lexically_normal();
}

std::string relativize(const std::filesystem::path& base, const std::filesystem::path& p) {
    if (!p.is_absolute()) return p.generic_string();
    auto rel = p.lexically_relative(base);
    if (rel.empty() || *rel.begin() == "..") return p.generic_string();
    return rel.generic_string();
}

}  // namespace

DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "cannot open manifest " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        fail(ErrorKind::format, path.string() + ": " + e.what());
    }
    const auto base = std::filesystem::absolute(path).parent_path();

    DatasetManifest manifest;
    try {
        const auto split = doc.at("split").get<std::string>();
        if (split == "train") manifest.split = Split::train;
        else if (split == "test") manifest.split = Split::test;
        else fail(ErrorKind::validation, path.string() + ": unknown split '" + split + "'");
        manifest.layers = doc.at("layers").get<std::vector<int>>();
        for (const auto& item : doc.at("entries")) {
            ManifestEntry entry;
            entry.image_id = item.at("image_id").get<std::string>();
            for (const auto& [key, value] : item.at("tensors").items())
                entry.tensors[std::stoi(key)] = resolve(base, value.get<std::string>());
            if (item.contains("label") && !item["label"].is_null()) {
                const auto label = item["label"].get<std::string>();
                if (label == "normal") entry.label = Label::normal;
                else if (label == "anomalous") entry.label = Label::anomalous;
                else fail(ErrorKind::validation, path.string() + ": unknown label '" + label + "'");
            }
            if (item.contains("mask") && !item["mask"].is_null())
                entry.mask = resolve(base, item["mask"].get<std::string>());
            manifest.entries.push_back(std::move(entry));
        }
    } catch (const json::exception& e) {
        fail(ErrorKind::format, path.string() + ": " + e.what());
    } catch (const std::invalid_argument&) {
        fail(ErrorKind::format, path.string() + ": tensor keys must be integer layer ids");
    }
    manifest.validate();
    return manifest;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
    manifest.validate();
    const auto base = std::filesystem::absolute(path).parent_path();
    json doc;
    doc["split"] = to_string(manifest.split);
    doc["layers"] = manifest.layers;
    doc["entries"] = json::array();
    for (const auto& entry : manifest.entries) {
        json item;
        item["image_id"] = entry.image_id;
        json tensors = json::object();
        for (const auto& [layer, p] : entry.tensors) tensors[std::to_string(layer)] = relativize(base, p);
        item["tensors"] = tensors;
        item["label"] = entry.label ? json(to_string(*entry.label)) : json(nullptr);
        item["mask"] = entry.mask ? json(relativize(base, *entry.mask)) : json(nullptr);
        doc["entries"].push_back(std::move(item));
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot write manifest " + path.string());
    out << doc.dump(2) << '\n';
    if (!out) fail(ErrorKind::io, "failed writing manifest " + path.string());
}

std::vector<FeatureTensor> load_entry_tensors(const DatasetManifest& manifest, const ManifestEntry& entry) {
    std::vector<FeatureTensor> tensors;
    tensors.reserve(manifest.layers.size());
    for (int layer : manifest.layers) {
        auto it = entry.tensors.find(layer);
        if (it == entry.tensors.end())
            fail(ErrorKind::validation, "entry '" + entry.image_id + "' lacks layer " + std::to_string(layer));
        tensors.push_back(read_tensor(it->second, layer));
    }
    return tensors;
}

}  // namespace fapm
