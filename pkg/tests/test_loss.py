import numpy as np
import pytest

from itermatch.autodiff import Tensor
from itermatch.data import Batch, RawEmbedding, synth_dataset
from itermatch.errors import DataError
from itermatch.loss import (batch_similarity, pair_similarity, score_matrix,
                            triplet_loss)
from itermatch.model import init_params


def random_batch(rng, n, t=3, d_raw=5):
    images = [RawEmbedding(f"i{k}", "image", rng.normal(size=(t, d_raw)))
              for k in range(n)]
    texts = [RawEmbedding(f"t{k}", "text", rng.normal(size=(t, d_raw)))
             for k in range(n)]
    return Batch(images, texts)


class TestBatchSimilarity:
    def test_duplicate_text_gives_identical_columns(self):
        rng = np.random.default_rng(0)
        batch = random_batch(rng, 2)
        batch.texts[1] = RawEmbedding("t1", "text", batch.texts[0].tokens)
        p = init_params(rng, 5, 5, 4, 3)
        S = batch_similarity(batch, p, 2, 9.0).data
        np.testing.assert_array_equal(S[:, 0], S[:, 1])

    def test_noise_free_synthetic_diagonal_is_2k(self):
        images, texts, records, _ = synth_dataset(0, 4, 1, 1, 6, 0.0)
        rng = np.random.default_rng(1)
        p = init_params(rng, 6, 6, 4, 3)
        # identical projections make identical raw pairs map identically
        p.proj_txt.data[:] = p.proj_img.data
        batch = Batch([images[r.image_id] for r in records],
                      [texts[r.caption_id] for r in records])
        for k in (1, 2):
            S = batch_similarity(batch, p, k, 9.0).data
            np.testing.assert_allclose(np.diag(S), 2.0 * k, atol=1e-9)

    def test_cells_match_single_pair_scores(self):
        rng = np.random.default_rng(2)
        batch = random_batch(rng, 3)
        p = init_params(rng, 5, 5, 4, 3)
        S = batch_similarity(batch, p, 2, 9.0).data
        for i in range(3):
            for j in range(3):
                single = pair_similarity(batch.images[i], batch.texts[j],
                                         p, 2, 9.0).item()
                assert S[i, j] == pytest.approx(single, abs=1e-12)

    def test_entries_bounded(self):
        rng = np.random.default_rng(3)
        batch = random_batch(rng, 4)
        p = init_params(rng, 5, 5, 4, 3)
        for k in (1, 3):
            S = batch_similarity(batch, p, k, 9.0).data
            assert np.all(np.abs(S) <= 2.0 * k + 1e-9)

    def test_single_pair_batch_rejected(self):
        rng = np.random.default_rng(4)
        batch = random_batch(rng, 1)
        p = init_params(rng, 5, 5, 4, 3)
        with pytest.raises(DataError):
            batch_similarity(batch, p, 2, 9.0)


class TestTripletLoss:
    def test_diagonally_dominant_gives_zero(self):
        S = Tensor([[1.0, 0.0], [0.0, 1.0]])
        assert triplet_loss(S, margin=0.2).item() == 0.0

    def test_hand_enumerated_value(self):
        S = Tensor([[0.5, 0.6], [0.4, 0.9]])
        # hinge terms: 0.3 + 0 (wrong text), 0.1 + 0 (wrong image)
        assert triplet_loss(S, margin=0.2).item() == pytest.approx(0.4,
                                                                   abs=1e-12)

    def test_constant_shift_invariance_exact(self):
        rng = np.random.default_rng(5)
        # entries and shift on a dyadic grid so every addition is exact
        S = rng.integers(-2**20, 2**20, size=(5, 5)) / 2.0**20
        base = triplet_loss(Tensor(S), 0.2).item()
        shifted = triplet_loss(Tensor(S + 0.625), 0.2).item()
        assert base == shifted

    def test_loss_nonnegative(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            S = Tensor(rng.uniform(-2, 2, size=(4, 4)))
            assert triplet_loss(S, 0.2).item() >= 0.0

    def test_zero_iff_margin_satisfied(self):
        # margin and entries exactly representable, so the boundary is sharp
        S = np.array([[1.0, 0.75], [0.5, 1.0]])
        assert triplet_loss(Tensor(S), 0.25).item() == 0.0
        # violate by epsilon
        S = np.array([[1.0, 0.76], [0.5, 1.0]])
        assert triplet_loss(Tensor(S), 0.25).item() > 0.0

    def test_monotone_in_entries(self):
        rng = np.random.default_rng(7)
        S = rng.uniform(-1, 1, size=(4, 4))
        base = triplet_loss(Tensor(S), 0.2).item()
        up_diag = S.copy()
        up_diag[2, 2] += 0.3
        assert triplet_loss(Tensor(up_diag), 0.2).item() <= base
        up_off = S.copy()
        up_off[1, 3] += 0.3
        assert triplet_loss(Tensor(up_off), 0.2).item() >= base

    def test_gradient_matches_finite_difference_away_from_kinks(self):
        from itermatch.autodiff import fd_coordinate
        rng = np.random.default_rng(8)
        for _ in range(10):
            S = Tensor(rng.uniform(-1, 1, size=(3, 3)), requires_grad=True)
            diag = np.diag(S.data)
            hinges = np.concatenate([
                (0.2 - diag[:, None] + S.data).ravel(),
                (0.2 - diag[:, None] + S.data.T).ravel()])
            if np.any(np.abs(hinges) < 1e-4):
                continue  # too close to a kink for central differences
            triplet_loss(S, 0.2).backward()
            for i in range(9):
                fd = fd_coordinate(lambda: triplet_loss(S, 0.2).item(), S, i)
                a = S.grad.reshape(-1)[i]
                assert abs(a - fd) <= 1e-5 * max(1.0, abs(a) + abs(fd))

    def test_hardest_negative_mode(self):
        S = Tensor([[0.5, 0.6, 0.7], [0.4, 0.9, 0.3], [0.1, 0.2, 0.6]])
        full = triplet_loss(S, 0.2, hardest_negative=False).item()
        hard = triplet_loss(S, 0.2, hardest_negative=True).item()
        assert hard <= full
        # hand check row 0 wrong-text hinges: [0.2-0.5+0.6, 0.2-0.5+0.7]
        assert hard > 0.0

    def test_non_square_rejected(self):
        with pytest.raises(ValueError):
            triplet_loss(Tensor(np.ones((2, 3))), 0.2)

    def test_negative_margin_rejected(self):
        with pytest.raises(ValueError):
            triplet_loss(Tensor(np.eye(2)), -0.1)


class TestScoreMatrix:
    def test_rectangular_matrix(self):
        rng = np.random.default_rng(9)
        images = [RawEmbedding(f"i{k}", "image", rng.normal(size=(3, 5)))
                  for k in range(3)]
        texts = [RawEmbedding(f"t{k}", "text", rng.normal(size=(4, 5)))
                 for k in range(5)]
        p = init_params(rng, 5, 5, 4, 3)
        S = score_matrix(images, texts, p, 2, 9.0)
        assert S.shape == (3, 5)
