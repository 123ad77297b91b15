"""Independent reference implementations used by the tests.

Everything here is written as plain loops straight from the definitions,
deliberately ignoring how the package implements the same math, so that
implementation and oracle stay separate routes to the same numbers.
"""

import math

import numpy as np


def naive_conv2d(x, w, bias=None, groups=1, padding=0):
    """Grouped cross-correlation via explicit loops."""
    n, cin, h, wd = x.shape
    cout, cg, k, _ = w.shape
    oh = h + 2 * padding - k + 1
    ow = wd + 2 * padding - k + 1
    og = cout // groups
    out = np.zeros((n, cout, oh, ow))
    for bn in range(n):
        for o in range(cout):
            base = (o // og) * cg
            for i in range(oh):
                for j in range(ow):
                    acc = 0.0 if bias is None else float(bias[o])
                    for c in range(cg):
                        for ki in range(k):
                            for kj in range(k):
                                y = i + ki - padding
                                xx = j + kj - padding
                                if 0 <= y < h and 0 <= xx < wd:
                                    acc += x[bn, base + c, y, xx] * w[o, c, ki, kj]
                    out[bn, o, i, j] = acc
    return out


def naive_matmul(a, b):
    n, k = a.shape
    k2, m = b.shape
    assert k == k2
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for t in range(k):
                acc += a[i, t] * b[t, j]
            out[i, j] = acc
    return out


def scalar_softmax_rows(x, mask=None):
    rows, cols = x.shape
    out = np.zeros_like(x)
    for r in range(rows):
        if mask is None:
            keep = list(range(cols))
        else:
            keep = [c for c in range(cols) if mask[r, c]]
        m = max(x[r, c] for c in keep)
        exps = {c: math.exp(x[r, c] - m) for c in keep}
        z = sum(exps.values())
        for c in keep:
            out[r, c] = exps[c] / z
    return out


def scalar_layer_norm(x, gamma, beta, eps=1e-6):
    n, c, h, w = x.shape
    out = np.zeros_like(x)
    for bn in range(n):
        for i in range(h):
            for j in range(w):
                vec = x[bn, :, i, j]
                mu = sum(vec) / c
                var = sum((v - mu) ** 2 for v in vec) / c
                inv = 1.0 / math.sqrt(var + eps)
                for ch in range(c):
                    out[bn, ch, i, j] = gamma[ch] * (vec[ch] - mu) * inv + beta[ch]
    return out


# -- Fourier ----------------------------------------------------------------

def naive_dft2(plane):
    """Full 2-D DFT of one real plane, O(N^2) loops, e^{-i...} forward."""
    h, w = plane.shape
    out = np.zeros((h, w), dtype=np.complex128)
    for u in range(h):
        for v in range(w):
            acc = 0.0 + 0.0j
            for y in range(h):
                for x in range(w):
                    ang = -2.0 * math.pi * (u * y / h + v * x / w)
                    acc += plane[y, x] * complex(math.cos(ang), math.sin(ang))
            out[u, v] = acc
    return out


def naive_inverse_from_reduced(re, im, width):
    """Hermitian-extend a reduced spectrum and invert with loops, 1/(HW)
    normalization, keeping the real part."""
    h, wf = re.shape
    full = np.zeros((h, width), dtype=np.complex128)
    for u in range(h):
        for v in range(wf):
            full[u, v] = complex(re[u, v], im[u, v])
    for v in range(wf, width):
        for u in range(h):
            full[u, v] = np.conj(full[(h - u) % h, width - v])
    out = np.zeros((h, width))
    for y in range(h):
        for x in range(width):
            acc = 0.0 + 0.0j
            for u in range(h):
                for v in range(width):
                    ang = 2.0 * math.pi * (u * y / h + v * x / width)
                    acc += full[u, v] * complex(math.cos(ang), math.sin(ang))
            out[y, x] = acc.real / (h * width)
    return out


# -- metrics ----------------------------------------------------------------

def scalar_psnr(pred, gt):
    bands = pred.shape[0]
    vals = []
    for b in range(bands):
        se = 0.0
        cnt = 0
        for i in range(pred.shape[1]):
            for j in range(pred.shape[2]):
                d = pred[b, i, j] - gt[b, i, j]
                se += d * d
                cnt += 1
        mse = se / cnt
        vals.append(100.0 if mse < 1e-10 else 10.0 * math.log10(1.0 / mse))
    return sum(vals) / bands


def _reflect_index(i, n):
    while i < 0 or i >= n:
        i = -i if i < 0 else 2 * (n - 1) - i
    return i


def scalar_ssim(pred, gt, window=11, sigma=1.5, k1=0.01, k2=0.03):
    """SSIM by direct windowed sums with mirrored (edge-excluded) borders."""
    half = (window - 1) // 2
    coords = [i - (window - 1) / 2.0 for i in range(window)]
    w1d = [math.exp(-(t * t) / (2 * sigma * sigma)) for t in coords]
    s = sum(w1d)
    w1d = [v / s for v in w1d]
    c1 = (k1 * 1.0) ** 2
    c2 = (k2 * 1.0) ** 2
    bands, h, w = pred.shape
    out = []
    for b in range(bands):
        total = 0.0
        for ci in range(h):
            for cj in range(w):
                mx = my = exx = eyy = exy = 0.0
                for di in range(window):
                    for dj in range(window):
                        wt = w1d[di] * w1d[dj]
                        y = _reflect_index(ci + di - half, h)
                        x = _reflect_index(cj + dj - half, w)
                        px = pred[b, y, x]
                        py = gt[b, y, x]
                        mx += wt * px
                        my += wt * py
                        exx += wt * px * px
                        eyy += wt * py * py
                        exy += wt * px * py
                vx = exx - mx * mx
                vy = eyy - my * my
                cxy = exy - mx * my
                num = (2 * mx * my + c1) * (2 * cxy + c2)
                den = (mx * mx + my * my + c1) * (vx + vy + c2)
                total += num / den
        out.append(total / (h * w))
    return sum(out) / bands


def scalar_sam_deg(pred, gt):
    bands, h, w = pred.shape
    total = 0.0
    for i in range(h):
        for j in range(w):
            dot = np_ = ng = 0.0
            for b in range(bands):
                dot += pred[b, i, j] * gt[b, i, j]
                np_ += pred[b, i, j] ** 2
                ng += gt[b, i, j] ** 2
            den = max(math.sqrt(np_ * ng), 1e-8)
            cos = min(1.0, max(-1.0, dot / den))
            total += math.degrees(math.acos(cos))
    return total / (h * w)


def scalar_cc(pred, gt):
    bands, h, w = pred.shape
    cnt = h * w
    vals = []
    for b in range(bands):
        mx = sum(pred[b, i, j] for i in range(h) for j in range(w)) / cnt
        my = sum(gt[b, i, j] for i in range(h) for j in range(w)) / cnt
        cov = vx = vy = 0.0
        for i in range(h):
            for j in range(w):
                dx = pred[b, i, j] - mx
                dy = gt[b, i, j] - my
                cov += dx * dy
                vx += dx * dx
                vy += dy * dy
        cov /= cnt
        vx /= cnt
        vy /= cnt
        vals.append(cov / math.sqrt(max(vx, 1e-12) * max(vy, 1e-12)))
    return sum(vals) / bands


def scalar_ergas(pred, gt, scale):
    bands, h, w = pred.shape
    cnt = h * w
    acc = 0.0
    for b in range(bands):
        se = 0.0
        mu = 0.0
        for i in range(h):
            for j in range(w):
                se += (pred[b, i, j] - gt[b, i, j]) ** 2
                mu += gt[b, i, j]
        mse = se / cnt
        mu = max(mu / cnt, 1e-8)
        acc += mse / (mu * mu)
    return 100.0 / scale * math.sqrt(acc / bands)


def scalar_l1(pred, gt):
    return float(np.mean([abs(p - g) for p, g in
                          zip(pred.reshape(-1), gt.reshape(-1))]))


def scalar_sam_loss(pred, gt):
    n, bands, h, w = pred.shape
    total = 0.0
    for bn in range(n):
        for i in range(h):
            for j in range(w):
                dot = np_ = ng = 0.0
                for b in range(bands):
                    dot += pred[bn, b, i, j] * gt[bn, b, i, j]
                    np_ += pred[bn, b, i, j] ** 2
                    ng += gt[bn, b, i, j] ** 2
                den = max(math.sqrt(np_ * ng), 1e-8)
                cos = min(1.0, max(-1.0, dot / den))
                total += math.acos(cos) / math.pi
    return total / (n * h * w)


# -- resampling and optimization ---------------------------------------------

def cubic_weight(t):
    t = abs(t)
    if t <= 1.0:
        return 1.5 * t ** 3 - 2.5 * t ** 2 + 1.0
    if t < 2.0:
        return -0.5 * t ** 3 + 2.5 * t ** 2 - 4.0 * t + 2.0
    return 0.0


def _mirror(i, n):
    while i < 0 or i >= n:
        i = -1 - i if i < 0 else 2 * n - 1 - i
    return i


def scalar_bicubic_resize(plane, out_h, out_w):
    """One band, separable cubic with half-pixel centers, written as a
    direct 4x4 tap sum per output pixel."""
    in_h, in_w = plane.shape
    sy = in_h / out_h
    sx = in_w / out_w
    tmp = np.zeros((out_h, in_w))
    for i in range(out_h):
        src = (i + 0.5) * sy - 0.5
        base = math.floor(src)
        frac = src - base
        for j in range(in_w):
            acc = 0.0
            for m in range(-1, 3):
                acc += cubic_weight(frac - m) * plane[_mirror(base + m, in_h), j]
            tmp[i, j] = acc
    out = np.zeros((out_h, out_w))
    for j in range(out_w):
        src = (j + 0.5) * sx - 0.5
        base = math.floor(src)
        frac = src - base
        for i in range(out_h):
            acc = 0.0
            for m in range(-1, 3):
                acc += cubic_weight(frac - m) * tmp[i, _mirror(base + m, in_w)]
            out[i, j] = acc
    return out


def reference_adam(params, grads_per_step, lr_per_step, beta1=0.9,
                   beta2=0.999, eps=1e-8):
    """Textbook bias-corrected Adam on flat python lists."""
    params = [float(p) for p in params]
    m = [0.0] * len(params)
    v = [0.0] * len(params)
    for t, (grads, lr) in enumerate(zip(grads_per_step, lr_per_step), start=1):
        for i, g in enumerate(grads):
            m[i] = beta1 * m[i] + (1 - beta1) * g
            v[i] = beta2 * v[i] + (1 - beta2) * g * g
            mhat = m[i] / (1 - beta1 ** t)
            vhat = v[i] / (1 - beta2 ** t)
            params[i] -= lr * mhat / (math.sqrt(vhat) + eps)
    return params
