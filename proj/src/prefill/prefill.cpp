#include "quoka/prefill.hpp"

#include <algorithm>
#include <chrono>
#include <optional>
#include <string>

#include "quoka/random.hpp"

namespace quoka {

void PrefillConfig::validate() const
{
    layout.validate();
    if (B_CP < 1) {
        throw ValidationError("prefill config: B_CP must be >= 1");
    }
    if (layers < 1) {
        throw ValidationError("prefill config: layers must be >= 1");
    }
    if (const auto* q = std::get_if<QuokaSelector>(&selector)) {
        q->config.validate();
    } else if (const auto* l = std::get_if<LessIsMoreSelector>(&selector)) {
        l->inner.validate();
    } else if (const auto* s = std::get_if<SparqSelector>(&selector)) {
        if (s->d_l < 1 || s->d_l > layout.d || s->B_SA < 1) {
            throw ValidationError("prefill config: sparq needs 1 <= d_l <= d and B_SA >= 1");
        }
    } else if (const auto* k = std::get_if<LokiSelector>(&selector)) {
        if (k->d_l < 1 || k->d_l > layout.d || k->B_SA < 1) {
            throw ValidationError("prefill config: loki needs 1 <= d_l <= d and B_SA >= 1");
        }
    }
}

TensorQkvStream::TensorQkvStream(std::vector<QkvChunk> layers, HeadLayout layout)
    : layers_(std::move(layers)), layout_(layout)
{
    layout_.validate();
    if (layers_.empty()) {
        throw StreamError("qkv stream: no layers");
    }
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& c = layers_[l];
        if (c.q.rank() != 3 || c.k.rank() != 3 || c.v.rank() != 3 || c.q.dim(0) != layout_.n_q ||
            c.k.dim(0) != layout_.n_kv || c.q.dim(2) != layout_.d || c.k.dim(2) != layout_.d ||
            c.v.shape() != c.k.shape()) {
            throw StreamError("qkv stream: layer " + std::to_string(l) + " does not match the head layout");
        }
        if (c.q.dim(1) != c.k.dim(1)) {
            throw StreamError("qkv stream: layer " + std::to_string(l) + " has Q and K of different lengths");
        }
        if (l == 0) {
            length_ = c.q.dim(1);
        } else if (c.q.dim(1) != length_) {
            throw StreamError("qkv stream: layer " + std::to_string(l) + " has length " +
                              std::to_string(c.q.dim(1)) + ", layer 0 has " + std::to_string(length_));
        }
    }
}

QkvChunk TensorQkvStream::chunk(std::size_t layer, std::size_t start, std::size_t len) const
{
    const auto& c = layers_.at(layer);
    return {slice_positions(c.q, start, len), slice_positions(c.k, start, len), slice_positions(c.v, start, len)};
}

bool ChunkStats::same_counts(const ChunkStats& o) const
{
    return index == o.index && start == o.start && length == o.length && cached_before == o.cached_before &&
           selected == o.selected && scoring_ops == o.scoring_ops && predicted_ops == o.predicted_ops;
}

std::uint64_t PrefillStats::scoring_ops() const
{
    std::uint64_t total = 0;
    for (const auto& c : chunks) {
        total += c.scoring_ops;
    }
    return total;
}

double PrefillStats::predicted_ops() const
{
    double total = 0.0;
    for (const auto& c : chunks) {
        total += c.predicted_ops;
    }
    return total;
}

double PrefillStats::seconds() const
{
    double total = 0.0;
    for (const auto& c : chunks) {
        total += c.seconds;
    }
    return total;
}

bool PrefillStats::same_counts(const PrefillStats& o) const
{
    if (chunks.size() != o.chunks.size()) {
        return false;
    }
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        if (!chunks[i].same_counts(o.chunks[i])) {
            return false;
        }
    }
    return true;
}

double predicted_scoring_ops(const SelectorSpec& selector, const HeadLayout& layout, std::size_t chunk_len,
                             std::size_t cached, std::size_t layers)
{
    if (cached == 0) {
        return 0.0;
    }
    const double B = static_cast<double>(chunk_len);
    const double T = static_cast<double>(cached);
    const double d = static_cast<double>(layout.d);
    const double nq = static_cast<double>(layout.n_q);
    const double nkv = static_cast<double>(layout.n_kv);
    const double L = static_cast<double>(layers);
    auto quoka_like = [&](const SelectorConfig& c) {
        const double m = static_cast<double>(std::min(c.N_Q, chunk_len));
        if (c.query_subselection == QuerySubselection::uniform && !c.gqa_preaggregate) {
            return (d * nq + nq / nkv + nkv) * m * T;
        }
        return B + m * (1.0 + d * nkv) * T;
    };
    struct Visitor {
        const decltype(quoka_like)& quoka;
        double B, T, d, nq, L;
        double operator()(const DenseSelector&) const { return 0.0; }
        double operator()(const QuokaSelector& s) const { return L * quoka(s.config); }
        double operator()(const SparqSelector& s) const { return L * B * T * static_cast<double>(s.d_l) * nq; }
        double operator()(const LokiSelector& s) const
        {
            return L * static_cast<double>(s.d_l) * nq * (B * T + d * (B + T));
        }
        double operator()(const LessIsMoreSelector&) const { return d * nq * B * T; }
    };
    return std::visit(Visitor{quoka_like, B, T, d, nq, L}, selector);
}

namespace {

using Clock = std::chrono::steady_clock;

// Runs one chunk (all layers) against the cache, then appends the chunk.
class ChunkRunner {
public:
    explicit ChunkRunner(const PrefillConfig& cfg) : cfg_(cfg)
    {
        cfg_.validate();
        if (const auto* loki = std::get_if<LokiSelector>(&cfg_.selector)) {
            for (std::size_t l = 0; l < cfg_.layers; ++l) {
                projections_.push_back(random_orthonormal(cfg_.layout.d, loki->d_l, mix_seed(cfg_.seed, l)));
            }
        }
    }

    ChunkStats run(const std::vector<QkvChunk>& per_layer, std::size_t index, KVCache& cache,
                   std::vector<Tensor>& outputs)
    {
        const auto t0 = Clock::now();
        ChunkStats stats;
        stats.index = index;
        stats.start = cache.length();
        stats.length = per_layer.front().q.dim(1);
        stats.cached_before = cache.length();
        stats.predicted_ops =
            predicted_scoring_ops(cfg_.selector, cfg_.layout, stats.length, stats.cached_before, cfg_.layers);

        ScoringCost cost;
        std::optional<Selection> carried; // LessIsMore reuse within this chunk
        outputs.clear();
        for (std::size_t l = 0; l < cfg_.layers; ++l) {
            const QkvChunk& c = per_layer[l];
            const LayerKVCache& lc = cache.layer(l);
            std::optional<Selection> sel;
            if (lc.length() > 0) {
                sel = select(l, c.q, lc, stats.start, cost, carried);
            }
            outputs.push_back(attend_chunk(c.q, c.k, c.v, lc, sel ? &*sel : nullptr, cfg_.layout));
            stats.selected.push_back(sel ? sel->budget_used : lc.length());
        }
        for (std::size_t l = 0; l < cfg_.layers; ++l) {
            cache.layer(l).append(per_layer[l].k, per_layer[l].v);
        }
        stats.scoring_ops = cost.ops;
        stats.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
        return stats;
    }

private:
    std::optional<Selection> select(std::size_t layer, const Tensor& q, const LayerKVCache& cache,
                                    std::size_t start, ScoringCost& cost, std::optional<Selection>& carried)
    {
        const auto keys = cache.key_views();
        const std::uint64_t seed = mix_seed(cfg_.seed, layer, start);
        struct Visitor {
            ChunkRunner& self;
            std::size_t layer;
            const Tensor& q;
            const std::vector<MatrixView>& keys;
            std::uint64_t seed;
            ScoringCost& cost;
            std::optional<Selection>& carried;

            std::optional<Selection> operator()(const DenseSelector&) const { return std::nullopt; }
            std::optional<Selection> operator()(const QuokaSelector& s) const
            {
                return select_kv(q, keys, s.config, self.cfg_.layout, seed, &cost);
            }
            std::optional<Selection> operator()(const SparqSelector& s) const
            {
                return sparq_select(q, keys, s.d_l, s.B_SA, self.cfg_.layout, &cost);
            }
            std::optional<Selection> operator()(const LokiSelector& s) const
            {
                return loki_select(q, keys, self.projections_[layer], s.B_SA, self.cfg_.layout, &cost);
            }
            std::optional<Selection> operator()(const LessIsMoreSelector& s) const
            {
                if (less_is_more_gate(layer, s.scoring_layers)) {
                    carried = select_kv(q, keys, s.inner, self.cfg_.layout, seed, &cost);
                }
                return carried;
            }
        };
        return std::visit(Visitor{*this, layer, q, keys, seed, cost, carried}, cfg_.selector);
    }

    PrefillConfig cfg_;
    std::vector<Tensor> projections_;
};

} // namespace

PrefillResult prefill(const QkvStream& stream, const PrefillConfig& cfg)
{
    cfg.validate();
    if (stream.layers() != cfg.layers) {
        throw StreamError("prefill: stream has " + std::to_string(stream.layers()) + " layers, config expects " +
                          std::to_string(cfg.layers));
    }
    if (!(stream.layout() == cfg.layout)) {
        throw StreamError("prefill: stream head layout differs from config");
    }
    const std::size_t T = stream.length();
    if (T < 1) {
        throw StreamError("prefill: empty stream");
    }

    ChunkRunner runner(cfg);
    PrefillResult result;
    result.cache = KVCache(cfg.layers, cfg.layout.n_kv, cfg.layout.d);
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        result.outputs.emplace_back(Shape{cfg.layout.n_q, T, cfg.layout.d});
    }

    std::vector<QkvChunk> per_layer(cfg.layers);
    std::vector<Tensor> chunk_out;
    std::size_t index = 0;
    for (std::size_t start = 0; start < T; start += cfg.B_CP, ++index) {
        const std::size_t len = std::min(cfg.B_CP, T - start);
        for (std::size_t l = 0; l < cfg.layers; ++l) {
            per_layer[l] = stream.chunk(l, start, len);
            if (per_layer[l].q.dim(1) != len || per_layer[l].k.dim(1) != len) {
                throw StreamError("prefill: stream returned a chunk of the wrong length");
            }
        }
        result.stats.chunks.push_back(runner.run(per_layer, index, result.cache, chunk_out));
        for (std::size_t l = 0; l < cfg.layers; ++l) {
            for (std::size_t h = 0; h < cfg.layout.n_q; ++h) {
                const auto src = chunk_out[l].head(h).data;
                std::copy(src.begin(), src.end(),
                          result.outputs[l].head_data(h).begin() + static_cast<std::ptrdiff_t>(start * cfg.layout.d));
            }
        }
    }
    return result;
}

StepResult prefill_step(const std::vector<QkvChunk>& chunk, KVCache& cache, const PrefillConfig& cfg)
{
    cfg.validate();
    if (chunk.size() != cfg.layers) {
        throw StreamError("prefill_step: expected one Q/K/V per layer");
    }
    const std::size_t len = chunk.front().q.rank() == 3 ? chunk.front().q.dim(1) : 0;
    for (const auto& c : chunk) {
        if (c.q.rank() != 3 || c.k.rank() != 3 || c.q.dim(0) != cfg.layout.n_q || c.k.dim(0) != cfg.layout.n_kv ||
            c.q.dim(2) != cfg.layout.d || c.k.dim(2) != cfg.layout.d || c.v.shape() != c.k.shape() ||
            c.q.dim(1) != len || c.k.dim(1) != len) {
            throw StreamError("prefill_step: chunk does not match the head layout");
        }
    }
    if (cache.layers() == 0) {
        cache = KVCache(cfg.layers, cfg.layout.n_kv, cfg.layout.d);
    }
    if (cache.layers() != cfg.layers) {
        throw StreamError("prefill_step: cache layer count differs from config");
    }
    if (cache.layer(0).n_kv() != cfg.layout.n_kv || cache.layer(0).dim() != cfg.layout.d) {
        throw StreamError("prefill_step: cache head layout differs from config");
    }
    ChunkRunner runner(cfg);
    StepResult result;
    // Chunk index as if every earlier position had arrived in chunks of B_CP.
    const std::size_t index = (cache.length() + cfg.B_CP - 1) / cfg.B_CP;
    result.stats = runner.run(chunk, index, cache, result.outputs);
    return result;
}

DecodeResult decode_step(const std::vector<QkvChunk>& step, KVCache& cache, const PrefillConfig& cfg)
{
    for (const auto& c : step) {
        if (c.q.rank() != 3 || c.q.dim(1) != 1) {
            throw StreamError("decode_step: each layer must supply exactly one position");
        }
    }
    return prefill_step(step, cache, cfg);
}

} // namespace quoka
