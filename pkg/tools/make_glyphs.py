"""Regenerate src/gpgp/data/glyphs.txt from a system TrueType font.

This runs offline; the package itself only reads the checked-in asset.

    python tools/make_glyphs.py /usr/share/fonts/truetype/dejavu/DejaVuSansMono-Bold.ttf

Every glyph is cropped to the shared ink box of the whole (monospaced)
set, so letters keep their relative placement, then resized to a square
master and thresholded to a monochrome bitmap.
"""

import sys
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw, ImageFont

CHARS = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"
SIZE = 32
SUPERSAMPLE = 8


def render_char(font, ch, box):
    big = SIZE * SUPERSAMPLE
    canvas = Image.new("L", (big * 2, big * 2), 0)
    draw = ImageDraw.Draw(canvas)
    draw.text((big // 2, big // 2), ch, font=font, fill=255)
    arr = np.asarray(canvas, dtype=np.float64) / 255.0
    top, bottom, left, right = box
    crop = arr[top:bottom, left:right]
    img = Image.fromarray((crop * 255).astype(np.uint8)).resize((SIZE, SIZE), Image.LANCZOS)
    return (np.asarray(img) >= 128).astype(np.uint8)


def common_box(font):
    # union of ink over every glyph (monospaced, so they share one advance
    # cell); the tail of Q is allowed to clip at the baseline
    big = SIZE * SUPERSAMPLE
    canvas = Image.new("L", (big * 2, big * 2), 0)
    draw = ImageDraw.Draw(canvas)
    for ch in CHARS.replace("Q", ""):
        draw.text((big // 2, big // 2), ch, font=font, fill=255)
    ink = np.asarray(canvas) > 128
    rows = np.flatnonzero(ink.any(axis=1))
    cols = np.flatnonzero(ink.any(axis=0))
    return rows[0], rows[-1] + 1, cols[0], cols[-1] + 1


def main(font_path, out_path):
    font = ImageFont.truetype(font_path, SIZE * SUPERSAMPLE)
    box = common_box(font)
    lines = [
        "# gpgp glyph bank: one glyph per line",
        "# <char> <width> <height> <row hex> ... (rows top to bottom, MSB = leftmost pixel)",
    ]
    for ch in CHARS:
        bits = render_char(font, ch, box)
        hexrows = []
        for row in bits:
            value = int("".join(str(b) for b in row), 2)
            hexrows.append(f"{value:0{SIZE // 4}x}")
        lines.append(f"{ch} {SIZE} {SIZE} " + " ".join(hexrows))
    Path(out_path).write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    font_path = sys.argv[1] if len(sys.argv) > 1 else "/usr/share/fonts/truetype/dejavu/DejaVuSansMono-Bold.ttf"
    out = Path(__file__).resolve().parents[1] / "src" / "gpgp" / "data" / "glyphs.txt"
    main(font_path, out)
