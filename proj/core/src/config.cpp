/*
 * Copyright 2026 The cowbif Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "cowbif/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace cowbif {

using nlohmann::json;

namespace {

// Walks one JSON object, remembering which keys were consumed so leftovers
// can be reported.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where_self() + ": expected an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    const std::string p = where(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) throw ConfigError(p + ": expected a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!it->is_number_integer()) throw ConfigError(p + ": expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (it->is_number_unsigned() == false && it->get<std::int64_t>() < 0) {
          throw ConfigError(p + ": expected a non-negative integer");
        }
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!it->is_number()) throw ConfigError(p + ": expected a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!it->is_string()) throw ConfigError(p + ": expected a string");
    } else {
      if (!it->is_array()) throw ConfigError(p + ": expected an array");
      for (std::size_t i = 0; i < it->size(); ++i) {
        if (!(*it)[i].is_number_integer()) {
          throw ConfigError(p + "[" + std::to_string(i) + "]: expected an integer");
        }
      }
    }
    out = it->get<T>();
  }

  Section child(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    static const json kEmpty = json::object();
    return Section(it == j_.end() ? kEmpty : *it, where(key));
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError(where(k.c_str()) + ": unknown key");
    }
  }

 private:
  std::string where(const char* key) const { return path_.empty() ? key : path_ + "." + key; }
  std::string where_self() const { return path_.empty() ? "<root>" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_adam(Section& s, nn::AdamConfig& a) {
  s.read("learning_rate", a.learning_rate);
  s.read("beta1", a.beta1);
  s.read("beta2", a.beta2);
  s.read("epsilon", a.epsilon);
}

json adam_json(const nn::AdamConfig& a) {
  return {{"learning_rate", a.learning_rate}, {"beta1", a.beta1}, {"beta2", a.beta2}, {"epsilon", a.epsilon}};
}

}  // namespace

void PipelineConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& what) { throw ConfigError(key + ": " + what); };
  if (!(threshold >= 0.0)) fail("threshold", "must be >= 0");
  if (folds < 2) fail("folds", "must be >= 2");
  if (jobs < 1) fail("jobs", "must be >= 1");
  if (dataset.count < 1) fail("dataset.count", "must be >= 1");
  if (dataset.test_count < 0 || dataset.test_count >= dataset.count) {
    fail("dataset.test_count", "must lie in [0, dataset.count)");
  }
  if (min_spur_length < 0) fail("min_spur_length", "must be >= 0");
  if (!(target_spacing > 0.0)) fail("target_spacing", "must be > 0");
  if (segmentation.window < 2 || segmentation.stride < 1) fail("segmentation", "window >= 2 and stride >= 1 required");
  if (train_classifier.epochs < 0) fail("train_classifier.epochs", "must be >= 0");
  if (train_classifier.batch_size < 1) fail("train_classifier.batch_size", "must be >= 1");
  if (train_unet.epochs < 0) fail("train_unet.epochs", "must be >= 0");
  if (train_unet.batch_size < 1) fail("train_unet.batch_size", "must be >= 1");
  if (assembly.patch_size != classifier.input_size) {
    fail("assembly.patch_size", "must equal classifier.input_size");
  }
  if (segmentation.window != unet.input_size) fail("segmentation.window", "must equal unet.input_size");
  try {
    phantom.validate();
    classifier.validate();
    unet.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
}

PipelineConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("<root>: invalid JSON: ") + e.what());
  }
  PipelineConfig c;
  Section root(j, "");
  root.read("seed", c.seed);
  root.read("output_dir", c.output_dir);
  root.read("threshold", c.threshold);
  root.read("folds", c.folds);
  root.read("jobs", c.jobs);
  root.read("min_spur_length", c.min_spur_length);
  root.read("target_spacing", c.target_spacing);
  {
    Section s = root.child("dataset");
    s.read("manifest", c.dataset.manifest);
    s.read("count", c.dataset.count);
    s.read("test_count", c.dataset.test_count);
    s.finish();
  }
  {
    Section s = root.child("paths");
    s.read("unet_checkpoint", c.paths.unet_checkpoint);
    s.read("classifier_checkpoint", c.paths.classifier_checkpoint);
    s.finish();
  }
  {
    Section s = root.child("phantom");
    auto& p = c.phantom;
    std::vector<int> dims{p.dims.nx, p.dims.ny, p.dims.nz};
    double spacing = p.spacing.sx;
    s.read("dims", dims);
    s.read("spacing", spacing);
    if (dims.size() != 3) throw ConfigError("phantom.dims: expected three integers");
    p.dims = {dims[0], dims[1], dims[2]};
    p.spacing = {spacing, spacing, spacing};
    s.read("p_missing_pcom_left", p.p_missing_pcom_left);
    s.read("p_missing_pcom_right", p.p_missing_pcom_right);
    s.read("p_missing_acom", p.p_missing_acom);
    s.read("p_hypoplastic_pcom", p.p_hypoplastic_pcom);
    s.read("hypoplastic_scale", p.hypoplastic_scale);
    s.read("p_truncated_posterior", p.p_truncated_posterior);
    s.read("distal_branch_count", p.distal_branch_count);
    s.read("background_level", p.background_level);
    s.read("vessel_intensity", p.vessel_intensity);
    s.read("noise_sigma", p.noise_sigma);
    s.read("jitter_mm", p.jitter_mm);
    s.finish();
  }
  {
    Section s = root.child("classifier");
    s.read("input_size", c.classifier.input_size);
    s.read("widths", c.classifier.widths);
    s.read("convs_per_block", c.classifier.convs_per_block);
    s.read("hidden", c.classifier.hidden);
    s.read("dropout", c.classifier.dropout);
    s.finish();
  }
  {
    Section s = root.child("unet");
    s.read("input_size", c.unet.input_size);
    s.read("base_width", c.unet.base_width);
    s.read("levels", c.unet.levels);
    s.finish();
  }
  {
    Section s = root.child("train_classifier");
    s.read("epochs", c.train_classifier.epochs);
    s.read("batch_size", c.train_classifier.batch_size);
    s.read("augment", c.train_classifier.augment);
    read_adam(s, c.train_classifier.adam);
    s.finish();
  }
  {
    Section s = root.child("train_unet");
    s.read("epochs", c.train_unet.epochs);
    s.read("batch_size", c.train_unet.batch_size);
    s.read("patches_per_volume", c.train_unet.patches_per_volume);
    s.read("on_mask_fraction", c.train_unet.on_mask_fraction);
    s.read("probe_patches", c.train_unet.probe_patches);
    read_adam(s, c.train_unet.adam);
    s.finish();
  }
  {
    Section s = root.child("assembly");
    s.read("patch_size", c.assembly.patch_size);
    s.read("match_radius", c.assembly.match_radius);
    s.read("boni_min_distance", c.assembly.boni_min_distance);
    s.read("boni_ratio", c.assembly.boni_ratio);
    s.finish();
  }
  {
    Section s = root.child("segmentation");
    s.read("window", c.segmentation.window);
    s.read("stride", c.segmentation.stride);
    s.read("threshold", c.segmentation.threshold);
    s.finish();
  }
  root.finish();
  c.validate();
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string dump_config(const PipelineConfig& c) {
  const auto& p = c.phantom;
  json j{
      {"seed", c.seed},
      {"output_dir", c.output_dir},
      {"threshold", c.threshold},
      {"folds", c.folds},
      {"jobs", c.jobs},
      {"min_spur_length", c.min_spur_length},
      {"target_spacing", c.target_spacing},
      {"dataset", {{"manifest", c.dataset.manifest}, {"count", c.dataset.count}, {"test_count", c.dataset.test_count}}},
      {"paths",
       {{"unet_checkpoint", c.paths.unet_checkpoint}, {"classifier_checkpoint", c.paths.classifier_checkpoint}}},
      {"phantom",
       {{"dims", {p.dims.nx, p.dims.ny, p.dims.nz}},
        {"spacing", p.spacing.sx},
        {"p_missing_pcom_left", p.p_missing_pcom_left},
        {"p_missing_pcom_right", p.p_missing_pcom_right},
        {"p_missing_acom", p.p_missing_acom},
        {"p_hypoplastic_pcom", p.p_hypoplastic_pcom},
        {"hypoplastic_scale", p.hypoplastic_scale},
        {"p_truncated_posterior", p.p_truncated_posterior},
        {"distal_branch_count", p.distal_branch_count},
        {"background_level", p.background_level},
        {"vessel_intensity", p.vessel_intensity},
        {"noise_sigma", p.noise_sigma},
        {"jitter_mm", p.jitter_mm}}},
      {"classifier",
       {{"input_size", c.classifier.input_size},
        {"widths", c.classifier.widths},
        {"convs_per_block", c.classifier.convs_per_block},
        {"hidden", c.classifier.hidden},
        {"dropout", c.classifier.dropout}}},
      {"unet", {{"input_size", c.unet.input_size}, {"base_width", c.unet.base_width}, {"levels", c.unet.levels}}},
      {"train_classifier",
       {{"epochs", c.train_classifier.epochs},
        {"batch_size", c.train_classifier.batch_size},
        {"augment", c.train_classifier.augment}}},
      {"train_unet",
       {{"epochs", c.train_unet.epochs},
        {"batch_size", c.train_unet.batch_size},
        {"patches_per_volume", c.train_unet.patches_per_volume},
        {"on_mask_fraction", c.train_unet.on_mask_fraction},
        {"probe_patches", c.train_unet.probe_patches}}},
      {"assembly",
       {{"patch_size", c.assembly.patch_size},
        {"match_radius", c.assembly.match_radius},
        {"boni_min_distance", c.assembly.boni_min_distance},
        {"boni_ratio", c.assembly.boni_ratio}}},
      {"segmentation",
       {{"window", c.segmentation.window}, {"stride", c.segmentation.stride}, {"threshold", c.segmentation.threshold}}},
  };
  j["train_classifier"].update(adam_json(c.train_classifier.adam));
  j["train_unet"].update(adam_json(c.train_unet.adam));
  return j.dump(2);
}

}  // namespace cowbif
