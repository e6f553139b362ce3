from __future__ import annotations

import hashlib
import json
import os
from typing import Iterable


def checksum(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(path, command: str, config: dict, records: Iterable[dict]) -> None:
    """Records are sorted by input path, then output path."""
    records = sorted(records, key=lambda r: (r.get("input") or "", r.get("output") or ""))
    body = {"command": command, "config": config, "records": records}
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(body, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def read_manifest(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def verify_manifest(path, root=None) -> list[str]:
    """Output paths whose checksum no longer matches."""
    manifest = read_manifest(path)
    root = root or os.path.dirname(os.path.abspath(path))
    bad = []
    for rec in manifest["records"]:
        out = rec.get("output")
        if out and checksum(os.path.join(root, out)) != rec.get("checksum"):
            bad.append(out)
    return bad
