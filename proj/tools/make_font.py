#!/usr/bin/env python3
"""Rasterizes DejaVu Sans Mono into the 16x32 monochrome hex-grid font asset.

Run once; the output (assets/font16x32.hex) is checked in so the C++ build
never depends on FreeType or Pillow.

Format: one block per glyph,

    glyph <codepoint hex>
    <32 lines of 4 hex digits, one 16-bit row each, MSB = leftmost pixel>
"""
import argparse
import os

from PIL import Image, ImageDraw, ImageFont

CHARS = "abcdefghijklmnopqrstuvwxyz '-,."
CELL_W, CELL_H = 16, 32


def default_font():
    import matplotlib
    return os.path.join(os.path.dirname(matplotlib.__file__),
                        "mpl-data", "fonts", "ttf", "DejaVuSansMono.ttf")


def render(font, ch, baseline, threshold):
    img = Image.new("L", (CELL_W, CELL_H), 0)
    draw = ImageDraw.Draw(img)
    if ch != " ":
        left, _, right, _ = font.getbbox(ch, anchor="ls")
        x = (CELL_W - (right - left)) / 2 - left
        draw.text((x, baseline), ch, fill=255, font=font, anchor="ls")
    rows = []
    for y in range(CELL_H):
        bits = 0
        for x in range(CELL_W):
            if img.getpixel((x, y)) >= threshold:
                bits |= 1 << (CELL_W - 1 - x)
        rows.append(bits)
    return rows


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--ttf", default=default_font())
    ap.add_argument("--size", type=int, default=21)
    ap.add_argument("--baseline", type=int, default=23)
    ap.add_argument("--threshold", type=int, default=110)
    ap.add_argument("--out", default="assets/font16x32.hex")
    args = ap.parse_args()

    font = ImageFont.truetype(args.ttf, args.size)
    with open(args.out, "w", encoding="ascii") as f:
        f.write("# 16x32 monochrome glyphs rasterized from DejaVu Sans Mono "
                f"(size {args.size}, baseline row {args.baseline}).\n")
        f.write("# DejaVu fonts are derived from Bitstream Vera; see "
                "assets/LICENSE_DEJAVU.\n")
        for ch in CHARS:
            f.write(f"glyph {ord(ch):04x}\n")
            for bits in render(font, ch, args.baseline, args.threshold):
                f.write(f"{bits:04x}\n")


if __name__ == "__main__":
    main()
