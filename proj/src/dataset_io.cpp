// Copyright 2026 The CPL Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cpl/dataset_io.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cpl {
namespace {

Json vec_to_json(const Vec& v) {
  Json arr = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

Vec vec_from_json(const Json& arr, const char* field, size_t line_no) {
  if (!arr.is_array()) {
    throw std::runtime_error("dataset line " + std::to_string(line_no) + ": " +
                             field + " must be an array");
  }
  Vec v(static_cast<Eigen::Index>(arr.size()));
  Eigen::Index i = 0;
  for (const Json& x : arr) v(i++) = x.get<double>();
  return v;
}

}  // namespace

std::string dataset_to_jsonl(const Dataset& d) {
  std::ostringstream out;
  Json header{{"format", "cpl-dataset"}, {"meta", d.meta}};
  out << header.dump() << '\n';
  for (const PreferenceExample& ex : d.examples) {
    Json rec{{"id", ex.id},
             {"e", vec_to_json(ex.e)},
             {"e_prime", vec_to_json(ex.e_prime)},
             {"c", ex.c},
             {"t", ex.t},
             {"ell", ex.label}};
    if (ex.z.size() > 0) rec["z"] = vec_to_json(ex.z);
    if (ex.z_prime.size() > 0) rec["z_prime"] = vec_to_json(ex.z_prime);
    out << rec.dump() << '\n';
  }
  return out.str();
}

Dataset dataset_from_jsonl(const std::string& text) {
  Dataset d;
  std::istringstream in(text);
  std::string line;
  size_t line_no = 0;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const std::exception& e) {
      throw std::runtime_error("dataset line " + std::to_string(line_no) +
                               ": invalid JSON: " + e.what());
    }
    if (!j.is_object()) {
      throw std::runtime_error("dataset line " + std::to_string(line_no) +
                               ": expected an object");
    }
    if (line_no == 1 && !j.contains("id")) {
      // Header line.
      if (j.contains("meta")) d.meta = j["meta"];
      saw_header = true;
      continue;
    }
    PreferenceExample ex;
    try {
      ex.id = j.at("id").get<int64_t>();
      ex.e = vec_from_json(j.at("e"), "e", line_no);
      ex.e_prime = vec_from_json(j.at("e_prime"), "e_prime", line_no);
      ex.c = j.at("c").get<int>();
      ex.t = j.at("t").get<int>();
      ex.label = j.at("ell").get<int>();
    } catch (const Json::exception& e) {
      throw std::runtime_error("dataset line " + std::to_string(line_no) +
                               ": missing or malformed field: " + e.what());
    }
    if (ex.label != 0 && ex.label != 1) {
      throw std::runtime_error("dataset line " + std::to_string(line_no) +
                               ": ell must be 0 or 1");
    }
    if (j.contains("z")) ex.z = vec_from_json(j["z"], "z", line_no);
    if (j.contains("z_prime")) {
      ex.z_prime = vec_from_json(j["z_prime"], "z_prime", line_no);
    }
    d.examples.push_back(std::move(ex));
  }
  if (!saw_header && d.examples.empty()) {
    throw std::runtime_error("dataset: no header and no records");
  }
  if (!saw_header) {
    d.meta = Json{{"world", "imported"}};
  }
  return d;
}

void write_dataset_jsonl(const Dataset& d, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("dataset: cannot open " + path.string());
  out << dataset_to_jsonl(d);
  if (!out) throw std::runtime_error("dataset: write failed for " + path.string());
}

Dataset read_dataset_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("dataset: cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return dataset_from_jsonl(buf.str());
}

}  // namespace cpl
