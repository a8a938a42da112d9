"""Drive the batch front-end: manufacture data, identify the kernel, run the verification suite."""

import tempfile
from pathlib import Path

from memkernel.cli import main

with tempfile.TemporaryDirectory() as tmp:
    out = str(Path(tmp) / "roundtrip")
    print("$ memkernel presets")
    main(["presets"])
    print(f"\n$ memkernel manufacture --preset roundtrip --out {out}")
    main(["manufacture", "--preset", "roundtrip", "--out", out])
    print(f"\n$ memkernel identify --preset roundtrip --out {out}")
    code = main(["identify", "--preset", "roundtrip", "--out", out])
    print(f"exit code {code}")
    print("\n$ memkernel coeff-report --preset coefficients_abcd")
    main(["coeff-report", "--preset", "coefficients_abcd", "--out", str(Path(tmp) / "coeff")])
    bad = str(Path(tmp) / "bad")
    print("\n$ memkernel manufacture --preset degenerate && memkernel identify --preset degenerate")
    main(["manufacture", "--preset", "degenerate", "--out", bad])
    code = main(["identify", "--preset", "degenerate", "--out", bad])
    print(f"exit code {code}")
