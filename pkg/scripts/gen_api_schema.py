#!/usr/bin/env python3
"""Regenerate api-schema.json (the OpenAPI document the viewer codes against)."""

import json
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from waveprt.service import create_app  # noqa: E402


def build_schema() -> dict:
    with tempfile.TemporaryDirectory() as tmp:
        for sub in ("scenes", "envs", "checkpoints"):
            (Path(tmp) / sub).mkdir()
        return create_app(tmp).openapi()


if __name__ == "__main__":
    out = Path(__file__).resolve().parents[1] / "api-schema.json"
    out.write_text(json.dumps(build_schema(), indent=1, sort_keys=True) + "\n")
    print(f"wrote {out}")
