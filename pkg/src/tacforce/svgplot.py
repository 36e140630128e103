"""Native SVG line plots so runs can emit figures without a plotting stack.

Only line plots are supported. Output is deterministic: no timestamps,
fixed float formatting, series drawn in the order given.
"""

import numpy as np

from .errors import ContractError

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf")

_MARGIN = (52.0, 16.0, 30.0, 42.0)   # left, right, top, bottom


def nice_ticks(lo, hi, target=5):
    """Round tick positions covering [lo, hi] on a 1/2/5 ladder."""
    if not np.isfinite(lo) or not np.isfinite(hi):
        raise ContractError("tick range must be finite")
    if hi < lo:
        lo, hi = hi, lo
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    raw = (hi - lo) / max(target, 1)
    mag = 10.0 ** np.floor(np.log10(raw))
    step = min((m for m in (1.0, 2.0, 5.0, 10.0) if m * mag >= raw),
               default=10.0) * mag
    first = np.ceil(lo / step) * step
    ticks = np.arange(first, hi + 0.5 * step, step)
    # snap near-zero ticks so "-0" never shows up in labels
    ticks[np.abs(ticks) < 1e-12 * step] = 0.0
    return ticks


def _fmt(value):
    return f"{value:.6g}"


def _px(value):
    return f"{value:.2f}"


class _Scale:
    def __init__(self, lo, hi, out_lo, out_hi):
        if hi == lo:
            lo, hi = lo - 0.5, hi + 0.5
        self.lo, self.hi = lo, hi
        self.out_lo, self.out_hi = out_lo, out_hi

    def __call__(self, v):
        frac = (np.asarray(v, dtype=np.float64) - self.lo) / (self.hi - self.lo)
        return self.out_lo + frac * (self.out_hi - self.out_lo)


def line_plot(series, title="", xlabel="", ylabel="", size=(640, 400), path=None):
    """Render labelled (x, y) series as an SVG string; optionally write it.

    ``series`` is a sequence of (label, xs, ys) with equal-length
    finite arrays; at least one series and one point are required.
    """
    if not series:
        raise ContractError("line_plot needs at least one series")
    cleaned = []
    for label, xs, ys in series:
        xs = np.asarray(xs, dtype=np.float64).ravel()
        ys = np.asarray(ys, dtype=np.float64).ravel()
        if xs.size != ys.size or xs.size == 0:
            raise ContractError(f"series {label!r} needs matching non-empty x and y")
        if not (np.isfinite(xs).all() and np.isfinite(ys).all()):
            raise ContractError(f"series {label!r} contains non-finite values")
        cleaned.append((str(label), xs, ys))

    width, height = float(size[0]), float(size[1])
    left, right, top, bottom = _MARGIN
    x_lo = min(xs.min() for _, xs, _ in cleaned)
    x_hi = max(xs.max() for _, xs, _ in cleaned)
    y_lo = min(ys.min() for _, _, ys in cleaned)
    y_hi = max(ys.max() for _, _, ys in cleaned)
    sx = _Scale(x_lo, x_hi, left, width - right)
    sy = _Scale(y_lo, y_hi, height - bottom, top)   # y axis points up

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" '
        f'height="{height:.0f}" viewBox="0 0 {width:.0f} {height:.0f}">',
        f'<rect width="{width:.0f}" height="{height:.0f}" fill="white"/>',
        f'<rect x="{_px(left)}" y="{_px(top)}" width="{_px(width - left - right)}" '
        f'height="{_px(height - top - bottom)}" fill="none" stroke="#333"/>',
    ]
    if title:
        parts.append(f'<text x="{_px(width / 2)}" y="18" text-anchor="middle" '
                     f'font-size="14" font-family="sans-serif">{title}</text>')

    for t in nice_ticks(sx.lo, sx.hi):
        px = sx(t)
        parts.append(f'<line x1="{_px(px)}" y1="{_px(height - bottom)}" '
                     f'x2="{_px(px)}" y2="{_px(top)}" stroke="#ddd"/>')
        parts.append(f'<text x="{_px(px)}" y="{_px(height - bottom + 16)}" '
                     f'text-anchor="middle" font-size="11" '
                     f'font-family="sans-serif">{_fmt(t)}</text>')
    for t in nice_ticks(sy.lo, sy.hi):
        py = sy(t)
        parts.append(f'<line x1="{_px(left)}" y1="{_px(py)}" '
                     f'x2="{_px(width - right)}" y2="{_px(py)}" stroke="#ddd"/>')
        parts.append(f'<text x="{_px(left - 6)}" y="{_px(py + 4)}" '
                     f'text-anchor="end" font-size="11" '
                     f'font-family="sans-serif">{_fmt(t)}</text>')
    if xlabel:
        parts.append(f'<text x="{_px((left + width - right) / 2)}" '
                     f'y="{_px(height - 8)}" text-anchor="middle" font-size="12" '
                     f'font-family="sans-serif">{xlabel}</text>')
    if ylabel:
        cy = (top + height - bottom) / 2
        parts.append(f'<text x="14" y="{_px(cy)}" text-anchor="middle" '
                     f'font-size="12" font-family="sans-serif" '
                     f'transform="rotate(-90 14 {_px(cy)})">{ylabel}</text>')

    for k, (label, xs, ys) in enumerate(cleaned):
        color = PALETTE[k % len(PALETTE)]
        pts = " ".join(f"{_px(px)},{_px(py)}" for px, py in zip(sx(xs), sy(ys)))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
                     f'points="{pts}"/>')
        ly = top + 14 + 15 * k
        parts.append(f'<line x1="{_px(width - right - 96)}" y1="{_px(ly - 4)}" '
                     f'x2="{_px(width - right - 78)}" y2="{_px(ly - 4)}" '
                     f'stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{_px(width - right - 72)}" y="{_px(ly)}" '
                     f'font-size="11" font-family="sans-serif">{label}</text>')

    parts.append("</svg>")
    text = "\n".join(parts) + "\n"
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text
