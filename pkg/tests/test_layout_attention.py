import numpy as np
import pytest
import torch

from panelforge.geometry import BBox
from panelforge.models.layout_attention import (
    NEG_INF,
    MaskedDualCrossAttention,
    build_attention_mask,
    character_attention_probs,
    expand_mask,
    masked_dual_attention,
)

torch.manual_seed(0)


def brute_force_mask(char_boxes, panel_size, grid_hw, n_c_cap):
    """Direct per-cell evaluation of the layout gate definition.

    Independent of the implementation: float cell centers, plain
    membership, void column open exactly where no box covers the cell.
    """
    gh, gw = grid_hw
    pw, ph = panel_size
    values = np.full((gh * gw, n_c_cap + 1), NEG_INF, dtype=np.float32)
    for r in range(gh):
        for c in range(gw):
            i = r * gw + c
            cx = (c + 0.5) * pw / gw
            cy = (r + 0.5) * ph / gh
            in_any = False
            for j, box in enumerate(char_boxes):
                if box.x0 <= cx < box.x1 and box.y0 <= cy < box.y1:
                    values[i, j] = 0.0
                    in_any = True
            if not in_any:
                values[i, n_c_cap] = 0.0
    return values


def random_layout(rng, panel=64, grid_max=8, max_boxes=3):
    """Random panel layout whose boxes all cover at least one cell center."""
    gh = int(rng.integers(1, grid_max + 1))
    gw = int(rng.integers(1, grid_max + 1))
    boxes = []
    n = int(rng.integers(0, max_boxes + 1))
    while len(boxes) < n:
        w = int(rng.integers(panel // 8, panel))
        h = int(rng.integers(panel // 8, panel))
        x0 = int(rng.integers(0, panel - w + 1))
        y0 = int(rng.integers(0, panel - h + 1))
        box = BBox(x0, y0, x0 + w, y0 + h)
        raster = brute_force_mask([box], (panel, panel), (gh, gw), 1)
        if (raster[:, 0] == 0).any():
            boxes.append(box)
    return boxes, (panel, panel), (gh, gw)


class TestBuildMask:
    def test_no_characters(self):
        """Empty panel: void column all open, everything else blocked."""
        mask = build_attention_mask([], (64, 64), (2, 2), n_c_cap=3)
        assert mask.values.shape == (4, 4)
        assert (mask.values[:, 3] == 0).all()
        assert (mask.values[:, :3] == NEG_INF).all()

    def test_full_panel_box(self):
        """One box covering everything: its column open, void fully blocked."""
        mask = build_attention_mask([BBox(0, 0, 64, 64)], (64, 64), (2, 2), n_c_cap=2)
        assert (mask.values[:, 0] == 0).all()
        assert (mask.values[:, 2] == NEG_INF).all()

    def test_left_half_box_4x4(self):
        """Brute-force point-in-box over all 16 cells of a 4x4 grid."""
        box = BBox(0, 0, 32, 64)
        mask = build_attention_mask([box], (64, 64), (4, 4), n_c_cap=1)
        oracle = brute_force_mask([box], (64, 64), (4, 4), 1)
        np.testing.assert_array_equal(mask.values.numpy(), oracle)
        left = {r * 4 + c for r in range(4) for c in range(2)}
        assert {i for i in range(16) if mask.values[i, 0] == 0} == left
        assert {i for i in range(16) if mask.values[i, 1] == 0} == set(range(16)) - left

    def test_padded_slots_blocked(self):
        mask = build_attention_mask([BBox(0, 0, 32, 64)], (64, 64), (2, 2), n_c_cap=4)
        assert (mask.values[:, 1:4] == NEG_INF).all()

    def test_over_capacity_rejected(self):
        boxes = [BBox(0, 0, 8, 8)] * 3
        with pytest.raises(ValueError):
            build_attention_mask(boxes, (64, 64), (2, 2), n_c_cap=2)

    def test_box_outside_panel_rejected(self):
        with pytest.raises(ValueError):
            build_attention_mask([BBox(0, 0, 80, 8)], (64, 64), (2, 2), n_c_cap=2)

    def test_every_row_open(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            boxes, panel, grid = random_layout(rng)
            mask = build_attention_mask(boxes, panel, grid, n_c_cap=3)
            assert mask.open_rows().all()

    def test_matches_brute_force_random_sample(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            boxes, panel, grid = random_layout(rng)
            mask = build_attention_mask(boxes, panel, grid, n_c_cap=3)
            oracle = brute_force_mask(boxes, panel, grid, 3)
            np.testing.assert_array_equal(mask.values.numpy(), oracle)

    def test_tiny_box_never_silently_empty(self):
        mask = build_attention_mask([BBox(30, 30, 33, 33)], (64, 64), (2, 2), n_c_cap=1)
        assert (mask.values[:, 0] == 0).sum() == 1

    def test_scale_invariance(self):
        """Scaling panel and boxes together yields the identical mask."""
        boxes = [BBox(3, 5, 30, 40), BBox(33, 10, 60, 62)]
        m1 = build_attention_mask(boxes, (64, 64), (4, 4), n_c_cap=2)
        scaled = [BBox(b.x0 * 3, b.y0 * 3, b.x1 * 3, b.y1 * 3) for b in boxes]
        m2 = build_attention_mask(scaled, (192, 192), (4, 4), n_c_cap=2)
        assert torch.equal(m1.values, m2.values)

    def test_overlapping_boxes_share(self):
        """A cell inside several boxes is open in every covering column."""
        boxes = [BBox(0, 0, 48, 64), BBox(16, 0, 64, 64)]
        mask = build_attention_mask(boxes, (64, 64), (1, 4), n_c_cap=2)
        # cell centers at x = 8, 24, 40, 56
        assert mask.values[1, 0] == 0 and mask.values[1, 1] == 0


def make_attention(query_dim=6, context_dim=5, key_dim=4, alpha=0.7, dtype=torch.float64):
    torch.manual_seed(3)
    return MaskedDualCrossAttention(query_dim, context_dim, key_dim, alpha=alpha).to(dtype)


def random_inputs(mask, n_q=2, query_dim=6, context_dim=5, text_len=3, dtype=torch.float64, seed=5):
    gen = torch.Generator().manual_seed(seed)
    q = mask.values.shape[0]
    slots = mask.values.shape[1]
    z = torch.randn(1, q, query_dim, generator=gen, dtype=dtype)
    text = torch.randn(1, text_len, context_dim, generator=gen, dtype=dtype)
    chars = torch.randn(1, slots * n_q, context_dim, generator=gen, dtype=dtype)
    return z, text, chars


class TestMaskedDualAttention:
    def test_char_kv_initialized_from_text_kv(self):
        attn = make_attention()
        assert torch.equal(attn.to_k_char.weight, attn.to_k_text.weight)
        assert torch.equal(attn.to_v_char.weight, attn.to_v_text.weight)

    def test_alpha_zero_is_text_only(self):
        mask = build_attention_mask([BBox(0, 0, 32, 64)], (64, 64), (2, 2), n_c_cap=2)
        attn = make_attention()
        z, text, chars = random_inputs(mask)
        out = masked_dual_attention(z, text, chars, mask, attn, alpha=0.0)
        # text-only reference computed directly from the same weights
        q = z @ attn.to_q.weight.T
        logits = q @ (text @ attn.to_k_text.weight.T).transpose(-1, -2) / attn.key_dim**0.5
        expected = torch.softmax(logits, dim=-1) @ (text @ attn.to_v_text.weight.T)
        assert torch.equal(out, expected)

    def test_single_unmasked_token_contributes_alpha_v(self):
        """One query cell, capacity 0 (void only), n_q=1: softmax of one
        element is 1, so the character branch adds alpha * V(void)."""
        mask = build_attention_mask([], (64, 64), (1, 1), n_c_cap=0)
        attn = make_attention(alpha=0.7)
        z, text, chars = random_inputs(mask, n_q=1)
        out = masked_dual_attention(z, text, chars, mask, attn)
        out_text = masked_dual_attention(z, text, chars, mask, attn, alpha=0.0)
        v = chars @ attn.to_v_char.weight.T
        assert torch.allclose(out - out_text, 0.7 * v, atol=1e-12)

    def test_output_shape_matches_z(self):
        mask = build_attention_mask([BBox(0, 0, 32, 64)], (64, 64), (4, 4), n_c_cap=3)
        attn = make_attention()
        z, text, chars = random_inputs(mask)
        assert masked_dual_attention(z, text, chars, mask, attn).shape == z.shape

    def test_resolution_mismatch_rejected(self):
        mask = build_attention_mask([], (64, 64), (2, 2), n_c_cap=1)
        attn = make_attention()
        z, text, chars = random_inputs(mask)
        with pytest.raises(ValueError):
            masked_dual_attention(z[:, :3], text, chars, mask, attn)

    def test_locality_noise_in_masked_slot(self):
        """Char 0 pinned to the left column of a 2x2 grid: noise on its
        tokens changes only left-column outputs, bitwise."""
        box = BBox(0, 0, 32, 64)
        mask = build_attention_mask([box], (64, 64), (2, 2), n_c_cap=2)
        attn = make_attention()
        z, text, chars = random_inputs(mask)
        n_q = 2
        out_a = masked_dual_attention(z, text, chars, mask, attn)
        noisy = chars.clone()
        noisy[0, 0 : n_q] += torch.randn(n_q, 5, dtype=torch.float64)
        out_b = masked_dual_attention(z, text, noisy, mask, attn)
        diff = (out_a - out_b).abs().amax(dim=-1)[0]
        open_rows = (mask.values[:, 0] == 0).numpy()
        for i in range(4):
            if open_rows[i]:
                assert diff[i] > 0
            else:
                assert diff[i] == 0.0

    def test_void_routing(self):
        """Cells outside every box put all character-branch mass on void."""
        box = BBox(0, 0, 32, 64)
        mask = build_attention_mask([box], (64, 64), (2, 2), n_c_cap=2)
        attn = make_attention()
        z, _, chars = random_inputs(mask)
        n_q = 2
        with torch.no_grad():
            probs = character_attention_probs(z, chars, mask, attn)[0]
        void_cols = slice(2 * n_q, 3 * n_q)
        for i in range(4):
            if mask.values[i, 2] == 0:  # in no box
                assert probs[i, void_cols].sum() == pytest.approx(1.0)
                assert probs[i, : 2 * n_q].sum() == pytest.approx(0.0, abs=1e-30)

    def test_fully_blocked_row_asserts(self):
        bad = torch.full((4, 3), NEG_INF)
        attn = make_attention()
        z = torch.randn(1, 4, 6, dtype=torch.float64)
        text = torch.randn(1, 3, 5, dtype=torch.float64)
        chars = torch.randn(1, 6, 5, dtype=torch.float64)
        with pytest.raises(AssertionError):
            masked_dual_attention(z, text, chars, bad, attn)

    def test_expand_mask_broadcasts_per_slot(self):
        values = torch.tensor([[0.0, NEG_INF]])
        expanded = expand_mask(values, 3)
        assert expanded.tolist() == [[0.0, 0.0, 0.0, NEG_INF, NEG_INF, NEG_INF]]


class TestGradients:
    def finite_difference(self, f, tensor, eps=1e-6):
        grad = torch.zeros_like(tensor)
        flat = tensor.view(-1)
        gflat = grad.view(-1)
        for i in range(flat.numel()):
            orig = flat[i].item()
            flat[i] = orig + eps
            up = f().item()
            flat[i] = orig - eps
            down = f().item()
            flat[i] = orig
            gflat[i] = (up - down) / (2 * eps)
        return grad

    def test_gradcheck_all_inputs_and_weights(self):
        """Analytic (autograd) gradients vs central differences, float64."""
        mask = build_attention_mask([BBox(0, 0, 32, 64)], (64, 64), (2, 2), n_c_cap=1)
        attn = make_attention(query_dim=4, context_dim=3, key_dim=3)
        gen = torch.Generator().manual_seed(9)
        z = torch.randn(1, 4, 4, generator=gen, dtype=torch.float64, requires_grad=True)
        text = torch.randn(1, 2, 3, generator=gen, dtype=torch.float64, requires_grad=True)
        chars = torch.randn(1, 4, 3, generator=gen, dtype=torch.float64, requires_grad=True)
        probe = torch.randn(1, 4, 4, generator=gen, dtype=torch.float64)

        def loss_fn():
            return (masked_dual_attention(z, text, chars, mask, attn) * probe).sum()

        loss = loss_fn()
        inputs = {"z": z, "text": text, "chars": chars}
        weights = {
            "W_q": attn.to_q.weight,
            "W_k_text": attn.to_k_text.weight,
            "W_v_text": attn.to_v_text.weight,
            "W_k_char": attn.to_k_char.weight,
            "W_v_char": attn.to_v_char.weight,
        }
        every = {**inputs, **weights}
        grads = torch.autograd.grad(loss, list(every.values()))
        for (name, tensor), analytic in zip(every.items(), grads):
            with torch.no_grad():
                fd = self.finite_difference(loss_fn, tensor)
            rel = (analytic - fd).norm() / (fd.norm() + 1e-12)
            assert rel <= 1e-4, f"{name}: rel error {rel:.2e}"
