import shutil
import sys
from datetime import date
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

FIXTURES = Path(__file__).parent / "fixtures"


def copy_toy_tenant(tmp_path):
    """Copy the scripted toy tenant to a scratch directory so ingest, index
    files, telemetry, and reports never touch the checked-in fixture."""
    dst = tmp_path / "toy_tenant"
    shutil.copytree(FIXTURES / "toy_tenant", dst)
    return dst

from pitcrew.indexstore import DocumentChunk
from pitcrew.provider import ScriptedBehavior, ScriptedProvider, ScriptedRule

DIM = 64
TODAY = date(2025, 6, 1)


def make_provider(rules=None, default="ok", dimension=DIM):
    behavior = ScriptedBehavior(
        matchers=[ScriptedRule(**r) if isinstance(r, dict) else r
                  for r in (rules or [])],
        default=default,
    )
    return ScriptedProvider(behavior, dimension=dimension)


def make_chunk(provider, cid, kind="tsg", source="repo", embed=("title", "content"),
               **kwargs):
    fields = kwargs.pop("fields", {"title": cid, "content": f"content of {cid}"})
    chunk = DocumentChunk(id=cid, source=source, kind=kind, fields=fields, **kwargs)
    for name in embed:
        if fields.get(name):
            chunk.embeddings[name] = provider.embed(fields[name])
    return chunk


@pytest.fixture
def provider():
    return make_provider()
