"""Shared fixture builders for the test suite."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from granum.corpus import CorpusHandle, ingest
from granum.thesaurus import Thesaurus, load_thesaurus

FIXTURES = Path(__file__).parent / "fixtures"


def descriptor(
    ui: str,
    name: str = "",
    concepts: list | None = None,
    parents: list[str] | None = None,
    year: int = 2000,
    provenance: str = "other",
    host_ui: str | None = None,
) -> dict:
    return {
        "ui": ui,
        "name": name or ui,
        "parents": parents or [],
        "year_introduced": year,
        "provenance_type": provenance,
        "host_ui": host_ui,
        "concepts": concepts
        or [{"cui": f"C-{ui}", "preferred": True, "terms": [name or ui]}],
    }


def concept(cui: str, terms: list[str], preferred: bool = True) -> dict:
    return {"cui": cui, "preferred": preferred, "terms": terms}


def write_thesaurus(path: Path, descriptors: list[dict]) -> Path:
    path.write_text(json.dumps(descriptors, indent=1), encoding="utf-8")
    return path


def doc(
    pmid: str,
    title: str = "",
    abstract: str = "",
    year: int = 2000,
    descriptor_uis: list[str] | None = None,
    occurrences: list[str] | None = None,
) -> dict:
    return {
        "pmid": pmid,
        "title": title,
        "abstract": abstract,
        "year": year,
        "descriptor_uis": descriptor_uis or [],
        "occurrences": occurrences or [],
    }


def write_corpus(path: Path, docs: list[dict]) -> Path:
    with path.open("w", encoding="utf-8") as fh:
        for d in docs:
            fh.write(json.dumps(d, ensure_ascii=False) + "\n")
    return path


@pytest.fixture
def make_corpus(tmp_path):
    """Ingest a list of document dicts into a fresh store."""

    def build(docs: list[dict], name: str = "corpus") -> CorpusHandle:
        jsonl = write_corpus(tmp_path / f"{name}.jsonl", docs)
        return ingest(jsonl, tmp_path / f"{name}_store")

    return build


@pytest.fixture
def make_thesaurus(tmp_path):
    def build(descriptors: list[dict], name: str = "thesaurus") -> Thesaurus:
        path = write_thesaurus(tmp_path / f"{name}.json", descriptors)
        return load_thesaurus(path)

    return build
