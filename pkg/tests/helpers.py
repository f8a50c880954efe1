"""Shared test utilities: brute-force oracles and the finite-difference
gradient checker used by both the unit tests and the acceptance suite."""

from __future__ import annotations

import math

import numpy as np
import torch

from uvcd.losses import LossWeights, mcs_loss, mse_loss


# ---------------------------------------------------------------------------
# scalar-loop loss oracles (kept deliberately independent of the library
# implementations: plain Python floats, explicit loops)


def mse_oracle(a: np.ndarray, b: np.ndarray) -> float:
    total = 0.0
    count = 0
    for x, y in zip(a.ravel().tolist(), b.ravel().tolist()):
        total += (x - y) ** 2
        count += 1
    return total / count


def mcs_oracle(a: np.ndarray, b: np.ndarray) -> float:
    h, w, c = a.shape
    total = 0.0
    count = 0
    for i in range(h):
        for j in range(w):
            na = math.sqrt(sum(float(a[i, j, k]) ** 2 for k in range(c)))
            nb = math.sqrt(sum(float(b[i, j, k]) ** 2 for k in range(c)))
            if na == 0.0 or nb == 0.0:
                continue
            dot = sum(float(a[i, j, k]) * float(b[i, j, k]) for k in range(c))
            total += dot / (na * nb)
            count += 1
    return 1.0 - total / count


# ---------------------------------------------------------------------------
# Otsu / connected-components / greedy-matching oracles


def otsu_oracle_bin(counts: np.ndarray) -> int:
    """Exhaustive search over all 256 cut points; lowest bin wins ties."""
    n_bins = counts.size
    total = float(counts.sum())
    best_t, best_sigma = 0, -1.0
    for t in range(n_bins):
        w0 = float(counts[: t + 1].sum())
        w1 = total - w0
        if w0 == 0.0 or w1 == 0.0:
            sigma = 0.0
        else:
            mu0 = float((counts[: t + 1] * np.arange(t + 1)).sum()) / w0
            mu1 = float((counts[t + 1 :] * np.arange(t + 1, n_bins)).sum()) / w1
            sigma = w0 * w1 * (mu0 - mu1) ** 2
        if sigma > best_sigma:
            best_sigma, best_t = sigma, t
    return best_t


def flood_fill_components(mask: np.ndarray) -> list[frozenset]:
    """8-connected components by explicit BFS."""
    h, w = mask.shape
    seen = np.zeros_like(mask, dtype=bool)
    comps = []
    for r0 in range(h):
        for c0 in range(w):
            if not mask[r0, c0] or seen[r0, c0]:
                continue
            queue = [(r0, c0)]
            seen[r0, c0] = True
            pixels = []
            while queue:
                r, c = queue.pop()
                pixels.append((r, c))
                for dr in (-1, 0, 1):
                    for dc in (-1, 0, 1):
                        rr, cc = r + dr, c + dc
                        if 0 <= rr < h and 0 <= cc < w and mask[rr, cc] and not seen[rr, cc]:
                            seen[rr, cc] = True
                            queue.append((rr, cc))
            comps.append(frozenset(pixels))
    return comps


def greedy_match_oracle(iou: np.ndarray, theta: float):
    """Repeatedly pick the max-IoU available pair (lowest indices on
    ties) until nothing >= theta remains."""
    n1, n2 = iou.shape
    used1, used2 = set(), set()
    pairs = []
    while True:
        best = None
        for i in range(n1):
            if i in used1:
                continue
            for j in range(n2):
                if j in used2:
                    continue
                if iou[i, j] < theta:
                    continue
                if best is None or iou[i, j] > iou[best] + 1e-15:
                    best = (i, j)
        if best is None:
            break
        pairs.append((best[0], best[1], float(iou[best])))
        used1.add(best[0])
        used2.add(best[1])
    return pairs, tuple(sorted(set(range(n1)) - used1)), tuple(sorted(set(range(n2)) - used2))


# ---------------------------------------------------------------------------
# finite-difference gradient checking


def nudge_to_generic_point(model, scale: float = 0.1, seed: int = 0):
    """Move parameters off the tiny-norm init manifold.

    At the default init the cosine head's outputs have ~1e-5 norms, where
    the cosine term's higher derivatives blow up and central differences
    cannot converge at any step size. Gradient correctness is checked at
    a generic parameter point instead.
    """
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for p in model.parameters():
            p.add_(scale * torch.randn(p.shape, generator=gen, dtype=p.dtype))
    return model


def model_total_loss(model, levels, recon_targets, sem_target, weights: LossWeights):
    recons, sem_cos, sem_mse, _ = model(levels)
    total = weights.align_cos * mcs_loss(sem_cos, sem_target, channel_axis=1)
    total = total + weights.align_mse * mse_loss(sem_mse, sem_target)
    for w, pred, target in zip(weights.recon, recons, recon_targets):
        total = total + w * mse_loss(pred, target)
    return total


def finite_difference_check(
    model,
    levels,
    recon_targets,
    sem_target,
    weights: LossWeights,
    step: float = 1e-6,
    rtol: float = 1e-4,
) -> dict[str, float]:
    """Central finite differences vs autograd for every parameter group.

    Returns {param_name: max relative error}; raises AssertionError when a
    group exceeds rtol. Model must run in float64; the small step keeps
    truncation error below tolerance near the high-curvature cosine term.
    """
    model.zero_grad(set_to_none=True)
    loss = model_total_loss(model, levels, recon_targets, sem_target, weights)
    loss.backward()
    analytic = {name: p.grad.detach().clone() for name, p in model.named_parameters()}

    errors = {}
    with torch.no_grad():
        for name, p in model.named_parameters():
            flat = p.reshape(-1)
            fd = torch.zeros_like(flat)
            for idx in range(flat.numel()):
                orig = flat[idx].item()
                flat[idx] = orig + step
                up = model_total_loss(model, levels, recon_targets, sem_target, weights).item()
                flat[idx] = orig - step
                down = model_total_loss(model, levels, recon_targets, sem_target, weights).item()
                flat[idx] = orig
                fd[idx] = (up - down) / (2 * step)
            an = analytic[name].reshape(-1)
            denom = torch.maximum(
                torch.maximum(an.abs(), fd.abs()), torch.full_like(fd, 1e-4)
            )
            rel = ((an - fd).abs() / denom).max().item()
            errors[name] = rel
            assert rel < rtol, f"gradient mismatch for {name}: rel err {rel:.3e}"
    return errors


def rasters_to_tensors(arrays, dtype=torch.float64):
    return [
        torch.from_numpy(np.ascontiguousarray(a)).permute(2, 0, 1)[None].to(dtype)
        for a in arrays
    ]
