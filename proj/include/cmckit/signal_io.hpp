#pragma once

#include "cmckit/types.hpp"

#include <string>

namespace cmckit {

// On-disk format: a JSON metadata file plus a CSV data file.
//
// Metadata (UTF-8 JSON):
//   { "version": 1, "sample_rate_hz": number,
//     "channels": [ { "name": str, "kind": "EEG"|"EMG", "position": [x,y,z] } ],
//     "markers":  [ { "name": str, "start_sample": int, "end_sample": int } ] }
// "position" is present for EEG channels only.
//
// Data (UTF-8 CSV, LF line endings, "." decimal separator): first row holds
// the channel names in metadata order, each following row one sample instant
// with one decimal real per channel. Values are written with 9 significant
// digits, which round-trips the stored float32 samples exactly.

Recording load_recording(const std::string& metadata_path, const std::string& data_path);

void save_recording(const Recording& rec, const std::string& metadata_path,
                    const std::string& data_path);

// Returns the rows covered by the named marker; markers intersecting the
// slice are clipped and rebased, sample rate and channels are unchanged.
Recording slice_by_marker(const Recording& rec, const std::string& marker_name);

}  // namespace cmckit
