#!/usr/bin/env python3
"""Cross-checks the published JSON Schema against the CLI validator.

Every scenario must be accepted by both or rejected by both; files under an
`invalid/` directory must be rejected.
"""
import json
import pathlib
import subprocess
import sys

import jsonschema


def main():
    cli, schema_path, *paths = sys.argv[1:]
    schema = json.loads(pathlib.Path(schema_path).read_text())
    validator = jsonschema.Draft202012Validator(schema)
    files = []
    for p in map(pathlib.Path, paths):
        files += sorted(p.rglob("*.json")) if p.is_dir() else [p]
    bad = 0
    for f in files:
        schema_ok = not list(validator.iter_errors(json.loads(f.read_text())))
        cli_ok = subprocess.run([cli, "validate", "--config", str(f)], capture_output=True).returncode == 0
        expect_ok = "invalid" not in f.parts
        status = "ok" if schema_ok == cli_ok == expect_ok else "MISMATCH"
        bad += status != "ok"
        print(f"{status:8} schema={schema_ok} cli={cli_ok} expected={expect_ok} {f}")
    print(f"{len(files)} files, {bad} mismatches")
    return 1 if bad or not files else 0


if __name__ == "__main__":
    sys.exit(main())
