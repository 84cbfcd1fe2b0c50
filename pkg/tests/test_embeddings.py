"""Embedding provider contracts: determinism, normalization, keyed init."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lexdiag.embeddings import (
    HttpEmbeddingProvider,
    TokenHashProvider,
    init_node_embeddings,
    make_provider,
    node_embedding_row,
)
from lexdiag.errors import EmptyTextError, ProviderUnavailableError


class TokenHashProviderContract:
    def test_unit_norm(self):
        p = TokenHashProvider(dim=32)
        v = p.embed_text("the defendant was seen near the warehouse")
        np.testing.assert_allclose(np.linalg.norm(v), 1.0, atol=1e-9)

    def test_deterministic(self):
        p = TokenHashProvider(dim=32)
        a = p.embed_text("some case text")
        b = TokenHashProvider(dim=32).embed_text("some case text")
        np.testing.assert_array_equal(a, b)

    def test_word_order_irrelevant_token_counts_only(self):
        p = TokenHashProvider(dim=32)
        a = p.embed_text("cat dog cat")
        b = p.embed_text("dog cat cat")
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_different_texts_differ(self):
        p = TokenHashProvider(dim=32)
        a = p.embed_text("theft of a vehicle")
        b = p.embed_text("breach of contract")
        assert not np.allclose(a, b)

    def test_shared_vocabulary_is_closer_than_disjoint(self):
        p = TokenHashProvider(dim=64)
        base = p.embed_text("the stolen car was found near the river")
        near = p.embed_text("the stolen car was found near the bridge")
        far = p.embed_text("parties signed an employment agreement yesterday")
        assert base @ near > base @ far

    def test_empty_text_rejected(self):
        p = TokenHashProvider(dim=8)
        with pytest.raises(EmptyTextError):
            p.embed_text("   ")
        with pytest.raises(EmptyTextError):
            p.embed_text("!!!")

    @settings(max_examples=40)
    @given(st.text(alphabet="abc xyz", min_size=1, max_size=20))
    def test_norm_always_one_or_rejected(self, text):
        p = TokenHashProvider(dim=16)
        try:
            v = p.embed_text(text)
        except EmptyTextError:
            return
        np.testing.assert_allclose(np.linalg.norm(v), 1.0, atol=1e-9)


class TestNodeEmbeddingInit:
    def test_rows_keyed_by_label(self):
        """The same label gets the same row regardless of the label set."""
        a = init_node_embeddings(["alibi", "motive"], dim=16, seed=7)
        b = init_node_embeddings(["alibi", "weapon", "witness"], dim=16, seed=7)
        np.testing.assert_array_equal(a.row("alibi"), b.row("alibi"))

    def test_seed_changes_rows(self):
        a = node_embedding_row("alibi", 16, seed=1)
        b = node_embedding_row("alibi", 16, seed=2)
        assert not np.allclose(a, b)

    def test_entries_within_bound(self):
        d = 16
        m = init_node_embeddings([f"n{i}" for i in range(200)], dim=d, seed=0)
        bound = 1.0 / np.sqrt(d)
        assert np.all(np.abs(m.matrix) <= bound)

    def test_mean_near_zero(self):
        """Sample mean of uniform [-b, b] entries, 3 sigma band."""
        d = 8
        n = 10_000
        m = init_node_embeddings([f"n{i}" for i in range(n)], dim=d, seed=5)
        bound = 1.0 / np.sqrt(d)
        sigma_mean = (bound / np.sqrt(3.0)) / np.sqrt(n * d)
        assert abs(float(m.matrix.mean())) < 3.0 * sigma_mean

    def test_matrix_lookup(self):
        m = init_node_embeddings(["b", "a"], dim=4, seed=0)
        assert m.labels == ("a", "b")
        assert "a" in m and "zz" not in m
        np.testing.assert_array_equal(m.row("a"), m.matrix[0])

    def test_empty_label_set(self):
        m = init_node_embeddings([], dim=4, seed=0)
        assert m.matrix.shape == (0, 4)


class TestProviderFactory:
    def test_default_is_test_hash(self):
        p = make_provider({"dim": 12})
        assert isinstance(p, TokenHashProvider)
        assert p.dim == 12

    def test_http_provider_built(self):
        p = make_provider({"provider": "http", "url": "http://x/v1/embed", "dim": 8})
        assert isinstance(p, HttpEmbeddingProvider)

    def test_unknown_provider_rejected(self):
        with pytest.raises(ValueError):
            make_provider({"provider": "nope"})


class TestHttpProvider:
    def test_unreachable_service(self, monkeypatch):
        import httpx

        def boom(*args, **kwargs):
            raise httpx.ConnectError("no route")

        monkeypatch.setattr(httpx, "post", boom)
        p = HttpEmbeddingProvider("http://localhost:1/none", dim=4, retries=1)
        with pytest.raises(ProviderUnavailableError):
            p.embed_text("hello")

    def test_vector_normalized(self, monkeypatch):
        import httpx

        class FakeResponse:
            def raise_for_status(self):
                pass

            def json(self):
                return {"vector": [3.0, 4.0, 0.0, 0.0]}

        monkeypatch.setattr(httpx, "post", lambda *a, **k: FakeResponse())
        p = HttpEmbeddingProvider("http://x", dim=4)
        v = p.embed_text("hello")
        np.testing.assert_allclose(v, [0.6, 0.8, 0.0, 0.0], atol=1e-12)

    def test_wrong_shape_rejected(self, monkeypatch):
        import httpx

        class FakeResponse:
            def raise_for_status(self):
                pass

            def json(self):
                return {"vector": [1.0, 2.0]}

        monkeypatch.setattr(httpx, "post", lambda *a, **k: FakeResponse())
        p = HttpEmbeddingProvider("http://x", dim=4)
        with pytest.raises(ProviderUnavailableError):
            p.embed_text("hello")
