"""On-disk layout of a Research Object directory and its stored versions.

::

    <root>/                      RO root (payload files at their relative refs)
    <root>/.ro/manifest.ttl      manifest
    <root>/.ro/annotations/NNN.ttl
    <root>/vNNN/                 stored versions, each a complete RO directory
    <root>/vNNN/.ro/evolution.ttl
    <root>/vNNN/.ro/version.json
"""

from __future__ import annotations

import json
import os
import re
import tempfile
import zipfile
from pathlib import Path
from urllib.parse import quote, unquote

from rokit.evolution import EvolutionStore, VersionRecord, emit_evolution_graph
from rokit.rdf import IRI, parse_turtle, serialize_turtle
from rokit.ro.model import (
    ANNOTATION_AREA,
    MANIFEST_PATH,
    BadIdentifierError,
    ResearchObject,
    load_research_object,
    serialize_manifest,
)

EVOLUTION_PATH = ".ro/evolution.ttl"
VERSION_RECORD_PATH = ".ro/version.json"
LOCK_PATH = ".ro/lock"
VERSION_DIR = re.compile(r"^v\d{3}$")
VALID_NAME = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")
_SAFE = "/-._~!$&'()*+,;=:@"


class LayoutError(Exception):
    pass


def ref_for_path(relpath: str) -> str:
    """Relative IRI reference for a POSIX path inside the RO root."""
    return quote(relpath, safe=_SAFE)


def path_for_ref(ref: str) -> str:
    rel = unquote(ref)
    parts = rel.split("/")
    if rel.startswith("/") or any(p in ("", ".", "..") for p in parts):
        raise BadIdentifierError(f"{ref!r} does not name a file inside the Research Object")
    return rel


def is_version_path(rel: str) -> bool:
    return bool(VERSION_DIR.match(rel.split("/", 1)[0]))


def atomic_write(path: Path, data: bytes) -> None:
    """Write via a temporary file and rename, so readers never see a partial file."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def file_resolver(root: Path, ro_id: IRI):
    """Payload resolver reading internal resources from ``root``."""

    def resolve(ref: IRI) -> bytes | None:
        rel = ref.value[len(ro_id.value) :] if ref.value.startswith(ro_id.value) else None
        if not rel:
            return None
        try:
            path = root / path_for_ref(rel)
        except BadIdentifierError:
            return None
        return path.read_bytes() if path.is_file() else None

    return resolve


def read_manifest_text(root: Path) -> str:
    path = root / MANIFEST_PATH
    if not path.is_file():
        raise LayoutError(f"no manifest at {path}")
    return path.read_text(encoding="utf-8")


def read_research_object(root: Path, ro_id: IRI) -> ResearchObject:
    """Load the RO stored in ``root`` whose identifier is ``ro_id``."""
    text = read_manifest_text(root)
    graph = parse_turtle(text, base=ro_id.value + MANIFEST_PATH)
    return load_research_object(graph, file_resolver(root, ro_id))


def write_research_object(root: Path, ro: ResearchObject) -> list[Path]:
    """Write payloads, annotation bodies and (last) the manifest.

    Returns the files that did not exist before, so a caller can roll back.
    """
    created: list[Path] = []
    try:
        for r in ro.aggregated:
            rel = ro.relative(r.ref)
            if not rel or r.content is None:
                continue
            path = root / path_for_ref(rel)
            if path.is_file() and path.read_bytes() == r.content:
                continue
            if not path.exists():
                created.append(path)
            atomic_write(path, r.content)
        manifest = root / MANIFEST_PATH
        if not manifest.exists():
            created.append(manifest)
        atomic_write(manifest, serialize_manifest(ro).encode("utf-8"))
    except BaseException:
        for p in created:
            if p.exists():
                p.unlink()
        raise
    prune_annotation_bodies(root, ro)
    return created


def prune_annotation_bodies(root: Path, ro: ResearchObject) -> None:
    area = root / ANNOTATION_AREA
    if not area.is_dir():
        return
    keep = {ro.relative(r.ref) for r in ro.aggregated}
    for f in area.iterdir():
        rel = ANNOTATION_AREA + f.name
        if f.is_file() and f.suffix == ".ttl" and ref_for_path(rel) not in keep:
            f.unlink()


# -- versions ---------------------------------------------------------------


def version_dir(live_root: Path, version_id: IRI, live_id: IRI) -> Path:
    rel = version_id.value[len(live_id.value) :].strip("/")
    return live_root / rel


def write_version(live_root: Path, store: EvolutionStore, version_id: IRI) -> Path:
    ro, rec = store.get(version_id)
    vdir = version_dir(live_root, version_id, rec.of_live)
    write_research_object(vdir, ro)
    evo = emit_evolution_graph(store, version_id)
    atomic_write(vdir / EVOLUTION_PATH, serialize_turtle(evo, base=version_id.value + EVOLUTION_PATH, scope=rec.of_live.value).encode())
    atomic_write(vdir / VERSION_RECORD_PATH, json.dumps(rec.to_json(), indent=2, sort_keys=True).encode())
    return vdir


def read_versions(live_root: Path, live_id: IRI, store: EvolutionStore) -> None:
    """Load every stored version under ``live_root`` into ``store`` in version order."""
    if not live_root.is_dir():
        return
    for d in sorted(p for p in live_root.iterdir() if p.is_dir() and VERSION_DIR.match(p.name)):
        rec_path = d / VERSION_RECORD_PATH
        if not rec_path.is_file():
            continue
        rec = VersionRecord.from_json(json.loads(rec_path.read_text(encoding="utf-8")))
        ro = read_research_object(d, rec.version_id).freeze()
        store.add(ro, rec)


# -- bundles ----------------------------------------------------------------


def bundle(root: Path, ro: ResearchObject, target: Path) -> Path:
    """Zip the live RO: manifest, annotation bodies and internal payloads."""
    target.parent.mkdir(parents=True, exist_ok=True)
    tmp = target.with_name(target.name + ".tmp")
    with zipfile.ZipFile(tmp, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        zf.writestr(MANIFEST_PATH, (root / MANIFEST_PATH).read_bytes())
        for r in sorted(ro.aggregated, key=lambda r: r.ref.value):
            rel = ro.relative(r.ref)
            if rel and r.content is not None:
                zf.writestr(path_for_ref(rel), r.content)
    os.replace(tmp, target)
    return target


def unbundle(archive: Path, dest: Path) -> Path:
    """Extract a bundle; the archive must carry ``.ro/manifest.ttl``."""
    with zipfile.ZipFile(archive) as zf:
        names = zf.namelist()
        if MANIFEST_PATH not in names:
            raise LayoutError(f"{archive} has no {MANIFEST_PATH}")
        for name in names:
            path_for_ref(ref_for_path(name))
        zf.extractall(dest)
    return dest
