#include "lesiondet/config.hpp"

#include "lesiondet/errors.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace lesiondet {

using nlohmann::json;

namespace {

// Applies the keys of `section` to fields via `fields`, a list of
// (key, setter); unknown keys raise DataError naming the section.
class SectionReader {
  public:
    SectionReader(const json& j, std::string name) : section_(j), name_(std::move(name)) {}

    template <typename T>
    void field(const char* key, T& target) {
        seen_.push_back(key);
        if (!section_.contains(key)) return;
        try {
            target = section_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw DataError("config: bad value for " + qualified(key) + " (" + e.what() + ")");
        }
    }

    void check_unknown() const {
        for (auto it = section_.begin(); it != section_.end(); ++it) {
            bool known = false;
            for (const auto& k : seen_) {
                if (it.key() == k) {
                    known = true;
                    break;
                }
            }
            if (!known) throw DataError("config: unknown key " + qualified(it.key()));
        }
    }

  private:
    std::string qualified(const std::string& key) const {
        return name_.empty() ? "\"" + key + "\"" : "\"" + name_ + "." + key + "\"";
    }

    const json& section_;
    std::string name_;
    std::vector<std::string> seen_;
};

json section_or_empty(const json& j, const char* key) {
    if (!j.contains(key)) return json::object();
    if (!j.at(key).is_object()) {
        throw DataError("config: \"" + std::string(key) + "\" must be an object");
    }
    return j.at(key);
}

} // namespace

RunConfig run_config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw DataError(std::string("config: invalid JSON (") + e.what() + ")");
    }
    if (!j.is_object()) throw DataError("config: top level must be a JSON object");

    RunConfig cfg;

    SectionReader top(j, "");
    top.field("seed", cfg.seed);

    {
        json sec = section_or_empty(j, "unet");
        SectionReader r(sec, "unet");
        r.field("depth", cfg.unet.depth);
        r.field("base_filters", cfg.unet.base_filters);
        r.check_unknown();
    }
    {
        json sec = section_or_empty(j, "training");
        SectionReader r(sec, "training");
        r.field("learning_rate", cfg.training.learning_rate);
        r.field("momentum", cfg.training.momentum);
        r.field("negative_weight", cfg.training.negative_weight);
        r.field("patience", cfg.training.patience);
        r.field("lr_factor", cfg.training.lr_factor);
        r.field("batch_size", cfg.training.batch_size);
        r.field("max_epochs", cfg.training.max_epochs);
        r.field("patch_px", cfg.training.patch_px);
        r.check_unknown();
    }
    {
        json sec = section_or_empty(j, "preprocessing");
        SectionReader r(sec, "preprocessing");
        r.field("target_spacing_mm", cfg.preprocessing.target_spacing_mm);
        r.field("band_sigmas_mm", cfg.preprocessing.band_sigmas_mm);
        r.check_unknown();
    }
    {
        json sec = section_or_empty(j, "candidates");
        SectionReader r(sec, "candidates");
        r.field("base_threshold", cfg.candidates.base_threshold);
        r.field("cluster_radius_mm", cfg.candidates.cluster_radius_mm);
        r.check_unknown();
    }
    {
        json sec = section_or_empty(j, "froc");
        SectionReader r(sec, "froc");
        r.field("hit_radius_mm", cfg.froc.hit_radius_mm);
        r.check_unknown();
    }

    // Top-level unknown-key check: the known keys are the scalar fields plus
    // the five section names.
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& k = it.key();
        if (k == "seed" || k == "unet" || k == "training" || k == "preprocessing" ||
            k == "candidates" || k == "froc") {
            continue;
        }
        throw DataError("config: unknown key \"" + k + "\"");
    }
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return run_config_from_json(buf.str());
    } catch (const DataError& e) {
        throw DataError(path + ": " + e.what());
    }
}

std::string run_config_to_json(const RunConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["unet"] = {{"depth", c.unet.depth}, {"base_filters", c.unet.base_filters}};
    j["training"] = {{"learning_rate", c.training.learning_rate},
                     {"momentum", c.training.momentum},
                     {"negative_weight", c.training.negative_weight},
                     {"patience", c.training.patience},
                     {"lr_factor", c.training.lr_factor},
                     {"batch_size", c.training.batch_size},
                     {"max_epochs", c.training.max_epochs},
                     {"patch_px", c.training.patch_px}};
    j["preprocessing"] = {{"target_spacing_mm", c.preprocessing.target_spacing_mm},
                          {"band_sigmas_mm", c.preprocessing.band_sigmas_mm}};
    j["candidates"] = {{"base_threshold", c.candidates.base_threshold},
                       {"cluster_radius_mm", c.candidates.cluster_radius_mm}};
    j["froc"] = {{"hit_radius_mm", c.froc.hit_radius_mm}};
    return j.dump(2) + "\n";
}

} // namespace lesiondet
