#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "seqsel/construction.hpp"
#include "seqsel/types.hpp"

namespace seqsel {

// Whole-file helpers. Writes go to a sibling temp file first and are renamed
// into place, so an interrupted command never leaves a truncated artifact
// under the final name.
std::string read_file(const std::string& path);
void atomic_write_file(const std::string& path, std::string_view bytes);

// Line-delimited JSON codecs. Loaders reject malformed lines with a data
// error naming the line number; `lenient_tail` additionally tolerates a
// truncated final line (interrupted stream being resumed).
std::string example_to_json(const Example& e);
Example example_from_json(std::string_view line);
ExamplePool load_pool(const std::string& path);
void save_pool(const ExamplePool& pool, const std::string& path);

std::string instance_to_json(const DataInstance& instance);
DataInstance instance_from_json(std::string_view line);
std::vector<DataInstance> load_instances(const std::string& path);
void save_instances(const std::vector<DataInstance>& instances, const std::string& path);

std::string record_to_json(const TrainingRecord& record);
TrainingRecord record_from_json(std::string_view line);
std::vector<TrainingRecord> load_records(const std::string& path, bool lenient_tail = false);
void save_records(const std::vector<TrainingRecord>& records, const std::string& path);

// Order-independent content hash of a pool (FNV over per-example hashes,
// combined by XOR so insertion order does not matter).
uint64_t pool_content_hash(const ExamplePool& pool);

// Provenance sidecar written next to construction outputs.
struct Manifest {
  uint64_t seed = 0;
  int k = 0;
  int l = 0;
  uint64_t pool_hash = 0;
  std::string lm_backend_id;
  uint64_t config_hash = 0;
  std::string created_at;  // RFC 3339; excluded from equivalence checks
};

std::string manifest_to_json(const Manifest& m);
Manifest manifest_from_json(std::string_view text);
void save_manifest(const Manifest& m, const std::string& path);
Manifest load_manifest(const std::string& path);
// Equality up to created_at.
bool manifests_equivalent(const Manifest& a, const Manifest& b);

std::string now_rfc3339();

// Per-epoch training loss trace, one {"epoch":..,"mean_loss":..} per line.
void save_loss_history(const std::vector<double>& epoch_mean_loss, const std::string& path);

}  // namespace seqsel
