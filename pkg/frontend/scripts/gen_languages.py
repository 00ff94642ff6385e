#!/usr/bin/env python3
"""Regenerate src/languages.ts from the pipeline's bundled language table."""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[2] / "src"))
from mmcorpus.langtable import default_languages  # noqa: E402

out = Path(sys.argv[1] if len(sys.argv) > 1 else "src/languages.ts")
codes = default_languages()
lines = [
    "// Generated by scripts/gen_languages.py from the pipeline's language table.",
    "// Do not edit by hand; regenerate with `npm run gen-languages`.",
    "export const LANGUAGES: readonly string[] = [",
]
for i in range(0, len(codes), 6):
    row = ", ".join(f'"{c}"' for c in codes[i:i + 6])
    lines.append(f"  {row},")
lines.append("];")
out.write_text("\n".join(lines) + "\n", encoding="utf-8")
print(f"wrote {len(codes)} codes to {out}")
