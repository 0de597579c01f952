#pragma once

#include <string>
#include <vector>

#include "paseg/phantom.hpp"

namespace paseg {

// JSON-lines manifest: one object per line with fields `id`, `image` (path
// relative to the manifest), `points` (4 x [x,y], real-valued, order-free),
// optional `mask` (path) and `spacing_mm`.
std::vector<SampleRecord> load_manifest(const std::string& path);

// Writes images/<id>.<ext>, masks/<id>.<ext> (when ground truth is present)
// and manifest.jsonl under `dir`; returns the manifest path.
std::string write_dataset(const std::string& dir, const std::vector<SampleRecord>& records,
                          bool as_png = false);

}  // namespace paseg
