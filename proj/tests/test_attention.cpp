#include <doctest.h>

#include "quoka/attention.hpp"
#include "quoka/errors.hpp"
#include "quoka/kv_cache.hpp"
#include "quoka/oracles.hpp"
#include "quoka/selection.hpp"
#include "quoka/selectors.hpp"
#include "support.hpp"

using namespace quoka;
using testing::random_tensor;

namespace {

AttentionBatch random_batch(Rng& rng, const HeadLayout& layout, std::size_t t_q, std::size_t t_k)
{
    return {random_tensor(rng, {layout.n_q, t_q, layout.d}), random_tensor(rng, {layout.n_kv, t_k, layout.d}),
            random_tensor(rng, {layout.n_kv, t_k, layout.d}), layout, t_k - t_q};
}

} // namespace

TEST_CASE("group_of examples")
{
    CHECK(group_of(3, {8, 2, 4}) == 0);
    CHECK(group_of(4, {8, 2, 4}) == 1);
    CHECK(group_of(2, {4, 4, 4}) == 2);
    CHECK_THROWS_AS(group_of(8, {8, 2, 4}), BoundsError);
    CHECK_THROWS_AS((HeadLayout{6, 4, 8}.validate()), DimensionError);
    CHECK_THROWS_AS((HeadLayout{4, 2, 0}.validate()), DimensionError);
}

TEST_CASE("single key attention returns the value row")
{
    const HeadLayout layout{1, 1, 3};
    const Tensor one({1, 1, 3}, {1, 1, 1});
    const Tensor v({1, 1, 3}, {0.25f, -2.0f, 7.0f});
    CHECK(dense_attention({one, one, v, layout, 0}) == v);
}

TEST_CASE("dense attention matches the 64-bit oracle")
{
    Rng rng(21);
    const AttentionBatch b = random_batch(rng, {4, 2, 6}, 3, 5);
    CHECK(testing::max_abs_diff(oracle::dense_attention(b.q, b.k, b.v, b.layout, b.causal_offset), dense_attention(b)) <=
          1e-5);
    for (int trial = 0; trial < 100; ++trial) {
        const HeadLayout layout = testing::random_layout(rng, 40);
        const std::size_t t_k = testing::pick(rng, 1, 70);
        const std::size_t t_q = testing::pick(rng, 1, t_k);
        const AttentionBatch r = random_batch(rng, layout, t_q, t_k);
        CHECK(testing::max_abs_diff(oracle::dense_attention(r.q, r.k, r.v, layout, r.causal_offset),
                                    dense_attention(r)) <= 1e-5);
    }
}

TEST_CASE("dense attention rejects bad shapes")
{
    Rng rng(22);
    AttentionBatch b = random_batch(rng, {4, 2, 6}, 3, 5);
    b.causal_offset = 6;
    CHECK_THROWS_AS(dense_attention(b), DimensionError);
    AttentionBatch c = random_batch(rng, {4, 2, 6}, 3, 5);
    c.k = random_tensor(rng, {2, 4, 6});
    CHECK_THROWS_AS(dense_attention(c), DimensionError);
    AttentionBatch e = random_batch(rng, {4, 2, 6}, 3, 5);
    e.layout = {4, 1, 6};
    CHECK_THROWS_AS(dense_attention(e), DimensionError);
}

TEST_CASE("causality: future keys never reach a query")
{
    Rng rng(23);
    for (int trial = 0; trial < 40; ++trial) {
        const HeadLayout layout = testing::random_layout(rng);
        const std::size_t t_k = testing::pick(rng, 2, 30);
        const std::size_t t_q = testing::pick(rng, 1, t_k);
        const AttentionBatch b = random_batch(rng, layout, t_q, t_k);
        const Tensor base = dense_attention(b);
        const std::size_t j = testing::pick(rng, b.causal_offset + 1, t_k) - 1;
        AttentionBatch z = b;
        for (std::size_t h = 0; h < layout.n_kv; ++h) {
            for (std::size_t c = 0; c < layout.d; ++c) {
                z.k.at(h, j, c) = 0.0f;
                z.v.at(h, j, c) = 0.0f;
            }
        }
        const Tensor out = dense_attention(z);
        for (std::size_t h = 0; h < layout.n_q; ++h) {
            for (std::size_t i = 0; i < t_q; ++i) {
                if (j >= b.causal_offset + i + 1) {
                    for (std::size_t c = 0; c < layout.d; ++c) {
                        CHECK(out.at(h, i, c) == base.at(h, i, c));
                    }
                }
            }
        }
    }
}

TEST_CASE("GQA with n_kv = n_q equals per-head MHA")
{
    Rng rng(24);
    const HeadLayout layout{4, 4, 8};
    const AttentionBatch b = random_batch(rng, layout, 6, 9);
    const Tensor out = dense_attention(b);
    for (std::size_t h = 0; h < 4; ++h) {
        const auto slice = [&](const Tensor& t) {
            std::vector<float> v(t.head(h).data.begin(), t.head(h).data.end());
            return Tensor({1, t.dim(1), 8}, v);
        };
        const auto ref = oracle::dense_attention(slice(b.q), slice(b.k), slice(b.v), {1, 1, 8}, 3);
        for (std::size_t i = 0; i < 6 * 8; ++i) {
            CHECK(std::abs(ref[i] - out.head(h).data[i]) <= 1e-5);
        }
    }
}

TEST_CASE("attention weights are row stochastic and causal")
{
    Rng rng(25);
    const AttentionBatch b = random_batch(rng, {4, 2, 8}, 5, 12);
    const Tensor w = attention_weights(b);
    CHECK(w.shape() == Shape{4, 5, 12});
    for (std::size_t h = 0; h < 4; ++h) {
        for (std::size_t i = 0; i < 5; ++i) {
            double sum = 0.0;
            for (std::size_t j = 0; j < 12; ++j) {
                sum += w.at(h, i, j);
                if (j >= 7 + i + 1) {
                    CHECK(w.at(h, i, j) == 0.0f);
                }
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
        }
    }
}

TEST_CASE("chunked attention equals dense")
{
    Rng rng(26);
    const HeadLayout layout{4, 2, 8};
    const Tensor q = random_tensor(rng, {4, 8, 8});
    const Tensor k = random_tensor(rng, {2, 8, 8});
    const Tensor v = random_tensor(rng, {2, 8, 8});
    const Tensor dense = dense_attention({q, k, v, layout, 0});
    CHECK(chunked_attention(q, k, v, layout, 8).output == dense);
    for (std::size_t b : {1, 2, 4}) {
        const ChunkedResult r = chunked_attention(q, k, v, layout, b);
        CHECK(testing::max_abs_diff(r.output, dense) <= 1e-5);
        CHECK(r.cache.length() == 8);
        CHECK(r.cache.keys_tensor() == k);
    }
}

TEST_CASE("chunked attention with a full-budget QuoKA hook equals dense")
{
    Rng rng(27);
    const HeadLayout layout{4, 2, 8};
    const Tensor q = random_tensor(rng, {4, 16, 8});
    const Tensor k = random_tensor(rng, {2, 16, 8});
    const Tensor v = random_tensor(rng, {2, 16, 8});
    const SelectorConfig cfg = SelectorConfig::quoka(16, 16);
    const SelectionHook hook = [&](const Tensor& qc, const LayerKVCache& cache) {
        return quoka_select(qc, cache.keys_tensor(), cfg, layout);
    };
    const ChunkedResult r = chunked_attention(q, k, v, layout, 4, hook);
    CHECK(testing::max_abs_diff(r.output, dense_attention({q, k, v, layout, 0})) <= 1e-5);
    CHECK(r.selected == std::vector<std::size_t>{0, 4, 8, 12});
}

TEST_CASE("attend_chunk attends selected rows then the chunk")
{
    Rng rng(28);
    const HeadLayout layout{2, 1, 4};
    LayerKVCache cache(1, 4);
    const Tensor k_old = random_tensor(rng, {1, 6, 4});
    const Tensor v_old = random_tensor(rng, {1, 6, 4});
    cache.append(k_old, v_old);
    const Tensor q = random_tensor(rng, {2, 2, 4});
    const Tensor k = random_tensor(rng, {1, 2, 4});
    const Tensor v = random_tensor(rng, {1, 2, 4});
    const Selection sel{{{1, 4}}, 2};
    const Tensor out = attend_chunk(q, k, v, cache, &sel, layout);

    // Reference: cache rows 1 and 4 followed by the chunk, offset 2.
    Tensor kk({1, 4, 4});
    Tensor vv({1, 4, 4});
    const std::size_t rows[] = {1, 4};
    for (std::size_t c = 0; c < 4; ++c) {
        for (std::size_t r = 0; r < 2; ++r) {
            kk.at(0, r, c) = k_old.at(0, rows[r], c);
            vv.at(0, r, c) = v_old.at(0, rows[r], c);
            kk.at(0, 2 + r, c) = k.at(0, r, c);
            vv.at(0, 2 + r, c) = v.at(0, r, c);
        }
    }
    CHECK(testing::max_abs_diff(oracle::dense_attention(q, kk, vv, layout, 2), out) <= 1e-6);

    const Selection bad{{{6}}, 1};
    CHECK_THROWS_AS(attend_chunk(q, k, v, cache, &bad, layout), ValidationError);
}

TEST_CASE("kv cache is append only")
{
    Rng rng(29);
    KVCache cache(3, 2, 4);
    CHECK(cache.length() == 0);
    const Tensor a = random_tensor(rng, {2, 3, 4});
    const Tensor b = random_tensor(rng, {2, 2, 4});
    cache.layer(0).append(a, a);
    cache.layer(0).append(b, b);
    CHECK(cache.layer(0).length() == 5);
    CHECK(cache.layer(0).keys(1).row(3)[2] == b.at(1, 0, 2));
    CHECK(cache.layer(0).values(0).row(1)[0] == a.at(0, 1, 0));
    CHECK_THROWS_AS(cache.layer(1).append(a, b), DimensionError);
    CHECK_THROWS_AS(cache.layer(1).append(random_tensor(rng, {1, 3, 4}), random_tensor(rng, {1, 3, 4})),
                    DimensionError);
}

TEST_CASE("selection validation")
{
    CHECK_NOTHROW(Selection::full(2, 5).validate(5));
    CHECK((Selection::full(1, 3).indices == std::vector<std::vector<std::size_t>>{{0, 1, 2}}));
    CHECK_THROWS_AS((Selection{{{2, 1}}, 2}.validate(5)), ValidationError);
    CHECK_THROWS_AS((Selection{{{1, 1}}, 2}.validate(5)), ValidationError);
    CHECK_THROWS_AS((Selection{{{1, 5}}, 2}.validate(5)), ValidationError);
}
