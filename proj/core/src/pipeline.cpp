// SPDX-License-Identifier: Apache-2.0
#include "talkit/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "talkit/error.hpp"

namespace talkit::pipeline {

DatasetBundle load_dataset(const std::filesystem::path& manifest_path,
                           const std::filesystem::path& annotations_path) {
  DatasetBundle bundle;
  bundle.manifest = io::read_manifest(manifest_path);
  bundle.annotations = io::read_annotations(annotations_path);
  bundle.manifest_dir = manifest_path.parent_path();

  std::map<std::string, const VideoRecord*> by_id;
  for (const auto& v : bundle.annotations.videos) {
    by_id[v.video_id()] = &v;
  }
  for (const auto& mv : bundle.manifest.videos) {
    auto it = by_id.find(mv.video_id);
    if (it == by_id.end()) {
      throw ValidationError("manifest video '" + mv.video_id +
                            "' is missing from the annotations");
    }
    if (std::abs(it->second->duration() - mv.duration) > 1e-6) {
      throw ValidationError("video '" + mv.video_id +
                            "': manifest and annotations disagree on "
                            "duration");
    }
  }
  return bundle;
}

SampleSet build_samples(const DatasetBundle& bundle,
                        const std::string& reference_source,
                        fusion::AlignMode mode) {
  if (bundle.manifest.videos.empty()) {
    throw ValidationError("manifest lists no videos");
  }
  std::map<std::string, const VideoRecord*> by_id;
  for (const auto& v : bundle.annotations.videos) {
    by_id[v.video_id()] = &v;
  }

  SampleSet set;
  const auto& first = bundle.manifest.videos.front();
  for (const auto& s : first.sources) {
    set.source_names.push_back(s.name);
    set.source_dims.push_back(s.dim);
  }
  const std::string reference =
      reference_source.empty() ? first.sources.front().name : reference_source;

  for (const auto& mv : bundle.manifest.videos) {
    if (mv.sources.size() != set.source_names.size()) {
      throw ValidationError("video '" + mv.video_id +
                            "': source list differs from the rest of the "
                            "manifest");
    }
    std::vector<fusion::FeatureSequence> seqs;
    seqs.reserve(mv.sources.size());
    for (std::size_t k = 0; k < mv.sources.size(); ++k) {
      const auto& ms = mv.sources[k];
      if (ms.name != set.source_names[k] || ms.dim != set.source_dims[k]) {
        throw ValidationError("video '" + mv.video_id +
                              "': source order or dims differ from the rest "
                              "of the manifest");
      }
      Mat data = io::read_feature_file(bundle.manifest_dir / ms.path);
      seqs.emplace_back(ms.name, std::move(data), ms.frames_per_clip,
                        ms.clip_stride_frames, mv.fps);
    }
    auto aligned = fusion::align_sources(seqs, reference, mode);

    const auto* ref_seq = &aligned.front();
    for (const auto& s : aligned) {
      if (s.source_name == reference) ref_seq = &s;
    }
    const double spst =
        static_cast<double>(ref_seq->clip_stride_frames) / ref_seq->fps;
    if (set.seconds_per_step == 0.0) {
      set.seconds_per_step = spst;
    } else if (std::abs(set.seconds_per_step - spst) > 1e-12) {
      throw ValidationError("video '" + mv.video_id +
                            "': reference grid step differs across videos");
    }

    TrainSample sample{*by_id.at(mv.video_id), {}};
    sample.sources.reserve(aligned.size());
    for (auto& s : aligned) sample.sources.push_back(std::move(s.data));
    set.samples.push_back(std::move(sample));
  }
  return set;
}

io::DetectionMap predict_all(const Localizer& model, const SampleSet& samples,
                             decode::DecodeConfig cfg) {
  if (cfg.seconds_per_step == 0.0) {
    cfg.seconds_per_step = samples.seconds_per_step;
  }
  cfg.validate();
  io::DetectionMap out;
  for (const auto& sample : samples.samples) {
    auto [padded, mask] =
        pad_to_max(sample.sources, model.config().max_seq_len);
    const PyramidOutput pyr = model.forward(padded, mask);
    out[sample.record.video_id()] =
        decode::decode_video(pyr, cfg, sample.record.duration());
  }
  return out;
}

}  // namespace talkit::pipeline
