"""Independent reference implementations written from the closed formulas."""

import math

import numpy as np


def ssim_global_direct(a: np.ndarray, b: np.ndarray, c1: float, c2: float) -> float:
    a = a.astype(np.float64).ravel()
    b = b.astype(np.float64).ravel()
    n = a.size
    mu_a = sum(a) / n
    mu_b = sum(b) / n
    var_a = sum((x - mu_a) ** 2 for x in a) / n
    var_b = sum((y - mu_b) ** 2 for y in b) / n
    cov = sum((x - mu_a) * (y - mu_b) for x, y in zip(a, b)) / n
    return ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2))


def gaussian_2d(size: int, sigma: float) -> np.ndarray:
    w = np.empty((size, size))
    c = (size - 1) / 2
    for i in range(size):
        for j in range(size):
            w[i, j] = math.exp(-((i - c) ** 2 + (j - c) ** 2) / (2 * sigma**2))
    return w / w.sum()


def ssim_windowed_direct(a: np.ndarray, b: np.ndarray, c1: float, c2: float, size: int = 11, sigma: float = 1.5) -> float:
    """Mean over every fully-contained window position of the weighted local SSIM."""
    a = a.astype(np.float64)
    b = b.astype(np.float64)
    h, w = a.shape
    g = gaussian_2d(size, sigma)
    scores = []
    for y in range(h - size + 1):
        for x in range(w - size + 1):
            pa = a[y : y + size, x : x + size]
            pb = b[y : y + size, x : x + size]
            mu_a = (g * pa).sum()
            mu_b = (g * pb).sum()
            var_a = (g * (pa - mu_a) ** 2).sum()
            var_b = (g * (pb - mu_b) ** 2).sum()
            cov = (g * (pa - mu_a) * (pb - mu_b)).sum()
            scores.append(((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)))
    return float(np.mean(scores))


def l1_loop(a: np.ndarray, b: np.ndarray) -> float:
    a = a.astype(np.float64)
    b = b.astype(np.float64)
    total = 0.0
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            total += abs(a[i, j] - b[i, j])
    return total / a.size


def cross_entropy_direct(logits: np.ndarray, label: int) -> float:
    m = max(logits)
    lse = m + math.log(sum(math.exp(v - m) for v in logits))
    return lse - logits[label]


def bce_logit_direct(z: float, target: float) -> float:
    p = 1 / (1 + math.exp(-z))
    return -(target * math.log(p) + (1 - target) * math.log(1 - p))


def central_difference(f, x: np.ndarray, eps: float = 1e-3) -> np.ndarray:
    """Gradient of scalar f at x by central differences, one coordinate at a time."""
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        xp = x.copy()
        xm = x.copy()
        xp[idx] += eps
        xm[idx] -= eps
        grad[idx] = (f(xp) - f(xm)) / (2 * eps)
    return grad
