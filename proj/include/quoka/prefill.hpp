#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "quoka/attention.hpp"
#include "quoka/kv_cache.hpp"
#include "quoka/selectors.hpp"

namespace quoka {

struct PrefillConfig {
    std::size_t B_CP = 128;                    // chunk size
    SelectorSpec selector = QuokaSelector{};
    std::size_t layers = 1;
    HeadLayout layout;
    std::uint64_t seed = 0;

    void validate() const;
};

// One chunk of projections for one layer: Q [n_q x t x d], K/V [n_kv x t x d].
struct QkvChunk {
    Tensor q;
    Tensor k;
    Tensor v;
};

// Supplies per-layer, per-position Q/K/V. Layers are independent attention
// instances that share only the chunk schedule.
class QkvStream {
public:
    virtual ~QkvStream() = default;
    virtual std::size_t layers() const = 0;
    virtual std::size_t length() const = 0;
    virtual HeadLayout layout() const = 0;
    virtual QkvChunk chunk(std::size_t layer, std::size_t start, std::size_t len) const = 0;
};

// In-memory stream over full-sequence tensors, one QkvChunk per layer.
class TensorQkvStream final : public QkvStream {
public:
    TensorQkvStream(std::vector<QkvChunk> layers, HeadLayout layout);

    std::size_t layers() const override { return layers_.size(); }
    std::size_t length() const override { return length_; }
    HeadLayout layout() const override { return layout_; }
    QkvChunk chunk(std::size_t layer, std::size_t start, std::size_t len) const override;

    const QkvChunk& layer(std::size_t i) const { return layers_.at(i); }

private:
    std::vector<QkvChunk> layers_;
    HeadLayout layout_;
    std::size_t length_ = 0;
};

// Fixture streams: a JSON manifest {"layers", "T", "layout", "tensors": [{"q","k","v"}]}
// next to QTNS tensor files (paths relative to the manifest).
TensorQkvStream load_fixture_stream(const std::filesystem::path& manifest);
void save_fixture_stream(const std::filesystem::path& directory, const TensorQkvStream& stream);

struct ChunkStats {
    std::size_t index = 0;
    std::size_t start = 0;
    std::size_t length = 0;
    std::size_t cached_before = 0;
    std::vector<std::size_t> selected;   // cached positions attended, per layer
    std::uint64_t scoring_ops = 0;        // counted by the selectors
    double predicted_ops = 0.0;           // complexity-table estimate
    double seconds = 0.0;

    // Everything except wall time.
    bool same_counts(const ChunkStats& other) const;
};

struct PrefillStats {
    std::vector<ChunkStats> chunks;

    std::uint64_t scoring_ops() const;
    double predicted_ops() const;
    double seconds() const;
    bool same_counts(const PrefillStats& other) const;
};

struct PrefillResult {
    std::vector<Tensor> outputs;   // per layer, [n_q x T x d]
    KVCache cache;
    PrefillStats stats;
};

PrefillResult prefill(const QkvStream& stream, const PrefillConfig& cfg);

struct StepResult {
    std::vector<Tensor> outputs;   // per layer, [n_q x t x d]
    ChunkStats stats;
};
using DecodeResult = StepResult;

// Processes one chunk (one Q/K/V per layer) against `cache` exactly as
// prefill would at that point, then appends the chunk. An empty `cache` is
// initialized from cfg.
StepResult prefill_step(const std::vector<QkvChunk>& chunk, KVCache& cache, const PrefillConfig& cfg);

// One generation step: a single position per layer, processed exactly like a
// prefill chunk of size 1 (so query sub-selection never fires). Appends the
// step's K/V to `cache`.
DecodeResult decode_step(const std::vector<QkvChunk>& step, KVCache& cache, const PrefillConfig& cfg);

// Complexity-table runtime estimate for scoring one chunk of `chunk_len`
// queries against `cached` positions, summed over `layers`.
double predicted_scoring_ops(const SelectorSpec& selector, const HeadLayout& layout, std::size_t chunk_len,
                             std::size_t cached, std::size_t layers);

} // namespace quoka
