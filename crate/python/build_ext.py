#!/usr/bin/env python3
"""Build the bellkit_py extension and copy it next to this script.

Plain cargo is enough here; no maturin or setuptools-rust required.
After this runs, `import bellkit_py` works from the python/ directory.
"""

import shutil
import subprocess
import sys
import sysconfig
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def main() -> int:
    subprocess.run(
        ["cargo", "build", "--release", "-p", "bellkit-py"],
        cwd=ROOT,
        check=True,
    )
    built = ROOT / "target" / "release" / "libbellkit_py.so"
    if not built.exists():
        # macOS names the cdylib differently.
        built = ROOT / "target" / "release" / "libbellkit_py.dylib"
    if not built.exists():
        print("error: cargo did not produce a bellkit_py cdylib", file=sys.stderr)
        return 1
    suffix = sysconfig.get_config_var("EXT_SUFFIX") or ".so"
    dest = Path(__file__).resolve().parent / f"bellkit_py{suffix}"
    shutil.copy2(built, dest)
    print(f"installed {dest}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
