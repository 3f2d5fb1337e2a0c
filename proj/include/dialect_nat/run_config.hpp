#pragma once

// Flat "key = value" run configuration for training. Lines starting with '#'
// are comments. Model keys feed ModelConfig, the rest feed TrainOptions;
// path keys (corpus, valid, align, augmented, out) are left to the caller.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "errors.hpp"
#include "model.hpp"
#include "training.hpp"

namespace dnat {

class RunConfig {
public:
    static const std::set<std::string>& known_keys() {
        static const std::set<std::string> keys = {
            "kind",         "d_model",       "n_branches",     "n_heads",        "n_layers",
            "d_seg",        "ffn_multiplier", "max_len",       "length_offset_range", "seg_on_decoder",
            "lambda_start", "lambda_end",    "epochs",         "batch_size",     "learning_rate",
            "optimizer",    "clip_norm",     "decay_start",    "decay_floor",    "weight_token",
            "weight_length", "weight_alignment", "seed",       "sampling",       "mask_null_rows",
            "corpus",       "valid",         "align",          "augmented",      "out"};
        return keys;
    }

    static RunConfig parse(const std::string& text) {
        RunConfig rc;
        std::istringstream is(text);
        std::size_t lineno = 0;
        for (std::string line; std::getline(is, line);) {
            ++lineno;
            if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
            const auto trim = [](std::string s) {
                const auto b = s.find_first_not_of(" \t\r");
                if (b == std::string::npos) return std::string();
                return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
            };
            line = trim(line);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError("run config line " + std::to_string(lineno) + " has no '='");
            rc.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        }
        return rc;
    }

    static RunConfig load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot read run config " + path);
        std::ostringstream ss;
        ss << in.rdbuf();
        return parse(ss.str());
    }

    void set(const std::string& key, const std::string& value) {
        if (!known_keys().count(key)) throw ConfigError("unknown run config key '" + key + "'");
        values_[key] = value;
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }
    std::string get(const std::string& key, const std::string& fallback = "") const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }
    const std::map<std::string, std::string>& values() const noexcept { return values_; }

    std::string serialize() const {
        std::ostringstream os;
        for (const auto& [k, v] : values_) os << k << " = " << v << '\n';
        return os.str();
    }

    // Overrides the fields named in this config, leaving the others as given.
    void apply(ModelConfig& c) const {
        if (has("kind")) {
            const auto k = get("kind");
            if (k != "nat" && k != "at") throw ConfigError("kind must be nat or at, got '" + k + "'");
            c.kind = k == "nat" ? ModelKind::nat : ModelKind::at;
        }
        size("d_model", c.d_model);
        size("n_branches", c.n_branches);
        size("n_heads", c.n_heads);
        size("n_layers", c.n_layers);
        size("d_seg", c.d_seg);
        size("ffn_multiplier", c.ffn_multiplier);
        size("max_len", c.max_len);
        size("length_offset_range", c.length_offset_range);
        flag("seg_on_decoder", c.seg_on_decoder);
    }

    void apply(TrainOptions& o) const {
        real("lambda_start", o.lambda_start);
        real("lambda_end", o.lambda_end);
        size("epochs", o.epochs);
        size("batch_size", o.batch_size);
        real("learning_rate", o.optimizer.learning_rate);
        real("clip_norm", o.optimizer.clip_norm);
        real("decay_start", o.optimizer.decay_start);
        real("decay_floor", o.optimizer.decay_floor);
        real("weight_token", o.weights.token);
        real("weight_length", o.weights.length);
        real("weight_alignment", o.weights.alignment);
        if (has("seed")) o.seed = number<std::uint64_t>("seed");
        flag("mask_null_rows", o.glancing.mask_null_rows);
        if (has("optimizer")) {
            const auto v = get("optimizer");
            if (v != "sgd" && v != "adam") throw ConfigError("optimizer must be sgd or adam, got '" + v + "'");
            o.optimizer.kind = v == "sgd" ? OptimizerKind::sgd : OptimizerKind::adam;
        }
        if (has("sampling")) {
            const auto v = get("sampling");
            if (v != "uniform" && v != "error_weighted")
                throw ConfigError("sampling must be uniform or error_weighted, got '" + v + "'");
            o.glancing.sampling = v == "uniform" ? GlancingSampling::uniform : GlancingSampling::error_weighted;
        }
        GlancingSchedule{o.lambda_start, o.lambda_end, 1}.validate();
        o.weights.validate();
    }

private:
    template <typename T>
    T number(const std::string& key) const {
        const std::string v = get(key);
        std::istringstream is(v);
        T out{};
        if (!(is >> out) || !is.eof() || (std::is_unsigned_v<T> && v.find('-') != std::string::npos))
            throw ConfigError("run config key " + key + " has invalid value '" + v + "'");
        return out;
    }
    void size(const std::string& key, std::size_t& dst) const {
        if (has(key)) dst = number<std::size_t>(key);
    }
    void real(const std::string& key, double& dst) const {
        if (has(key)) dst = number<double>(key);
    }
    void flag(const std::string& key, bool& dst) const {
        if (!has(key)) return;
        const auto v = get(key);
        if (v == "1" || v == "true") dst = true;
        else if (v == "0" || v == "false") dst = false;
        else throw ConfigError("run config key " + key + " must be 0/1/true/false, got '" + v + "'");
    }

    std::map<std::string, std::string> values_;
};

}  // namespace dnat
