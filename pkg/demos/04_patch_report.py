"""
Patch metrics and the report file
=================================

Runs the evaluation suite over directories written by 02_toy_distortion.py
and prints the summary tables. Patch rectangles are top,left,height,width.

    python demos/04_patch_report.py [toy_dir]
"""

import sys
from pathlib import Path

from ugan import evalsuite
from ugan.evalsuite import PatchSpec

toy = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out/toy")
patches = [PatchSpec.parse("top:0,0,32,64"), PatchSpec.parse("centre:16,16,32,32")]

report = evalsuite.run_report(
    toy / "clean",
    [("distorted", toy / "distorted"), ("clean-copy", toy / "clean")],
    patches,
    out_path=toy / "report.tsv",
)
print(report.summary())
print("records:", len(report.records), "->", toy / "report.tsv")
