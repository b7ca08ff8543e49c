"""
Command-line workflow
=====================

Cache the reference, run the bounded SCF and inspect the trace, using the
toy_rhf.json configuration next to this script.
"""

import csv
import json
import os
import tempfile
from pathlib import Path

from pwbounds.cli import main

config = Path(__file__).with_name("toy_rhf.json").resolve()
work = Path(tempfile.mkdtemp(prefix="pwbounds-demo-"))
os.environ["PWBOUNDS_CACHE_DIR"] = str(work / "cache")

# same as: pwbounds reference demos/toy_rhf.json
assert main(["reference", str(config)]) == 0
# a second call is a cache hit
assert main(["reference", str(config)]) == 0

assert main(["bounds", str(config), "--output-dir", str(work / "out")]) == 0
for path in sorted((work / "out").iterdir()):
    print(path.name)

summary = json.loads(next((work / "out").glob("*summary*.json")).read_text())
print(json.dumps({k: summary[k] for k in list(summary)[:6]}, indent=2))

with open(next((work / "out").glob("*trace*.csv"))) as fh:
    rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
print(len(rows), "trace rows; columns:", list(rows[0]))

# cutoffs only enter the bounded runs, so the sweep reuses the cached reference
assert main(["sweep", str(config), "--ecut", "100", "200", "400", "--output-dir", str(work / "sweep")]) == 0
print(sorted(p.name for p in (work / "sweep").iterdir()))
