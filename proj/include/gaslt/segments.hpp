#pragma once

// Gold gloss segmentation: analysis and generation tooling only. Translator
// code is compiled with GASLT_GLOSS_FREE defined (see the top-level build
// options), so including this header from a model-side source is a build
// error — that is the gloss-free guarantee.
#ifdef GASLT_GLOSS_FREE
#error "gold segmentation is off-limits to translator code"
#endif

#include <filesystem>
#include <string>
#include <vector>

#include "gaslt/data.hpp"

namespace gaslt::data {

struct GlossSegment {
  int gloss = 0;            // gloss id in [0, G)
  std::size_t start = 0;    // first frame
  std::size_t length = 0;   // frames
};

struct SampleSegments {
  std::string id;
  std::vector<GlossSegment> segments;
};

struct GeneratedCorpus {
  Corpus corpus;
  std::vector<SampleSegments> segments;  // train, then dev, then test order
};

GeneratedCorpus generate_corpus_with_segments(const SyntheticSpec& spec);

// one line per sample: <id>\t<gloss>:<start>:<length>\t...
void write_segments(const std::filesystem::path& path,
                    const std::vector<SampleSegments>& segments);
std::vector<SampleSegments> read_segments(const std::filesystem::path& path);

// Writes the full corpus layout consumed by data::load_corpus, plus
// segments.txt and manifest.txt. Returns the number of samples written.
std::size_t write_corpus(const std::filesystem::path& dir,
                         const SyntheticSpec& spec,
                         const GeneratedCorpus& generated);

}  // namespace gaslt::data
