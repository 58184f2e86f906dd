"""Reference resolution (RFC 3986 section 5) and its inverse."""

from __future__ import annotations

import posixpath
import re

_URI = re.compile(r"^(?:([^:/?#]+):)?(?://([^/?#]*))?([^?#]*)(?:\?([^#]*))?(?:#(.*))?$", re.S)


def _split(ref: str):
    m = _URI.match(ref)
    assert m is not None
    return m.group(1), m.group(2), m.group(3), m.group(4), m.group(5)


def _remove_dot_segments(path: str) -> str:
    out: list[str] = []
    while path:
        if path.startswith("../"):
            path = path[3:]
        elif path.startswith("./"):
            path = path[2:]
        elif path.startswith("/./"):
            path = "/" + path[3:]
        elif path == "/.":
            path = "/"
        elif path.startswith("/../"):
            path = "/" + path[4:]
            if out:
                out.pop()
        elif path == "/..":
            path = "/"
            if out:
                out.pop()
        elif path in (".", ".."):
            path = ""
        else:
            start = 1 if path.startswith("/") else 0
            i = path.find("/", start)
            if i < 0:
                i = len(path)
            out.append(path[:i])
            path = path[i:]
    return "".join(out)


def _join(scheme, authority, path, query, fragment) -> str:
    s = ""
    if scheme is not None:
        s += scheme + ":"
    if authority is not None:
        s += "//" + authority
    s += path
    if query is not None:
        s += "?" + query
    if fragment is not None:
        s += "#" + fragment
    return s


def resolve(base: str, ref: str) -> str:
    """Resolve ``ref`` against the absolute ``base``."""
    r_scheme, r_auth, r_path, r_query, r_frag = _split(ref)
    if r_scheme is not None:
        return _join(r_scheme, r_auth, _remove_dot_segments(r_path), r_query, r_frag)
    b_scheme, b_auth, b_path, b_query, _ = _split(base)
    if r_auth is not None:
        return _join(b_scheme, r_auth, _remove_dot_segments(r_path), r_query, r_frag)
    if r_path == "":
        path = b_path
        query = r_query if r_query is not None else b_query
    else:
        if r_path.startswith("/"):
            path = _remove_dot_segments(r_path)
        else:
            if b_auth is not None and b_path == "":
                merged = "/" + r_path
            else:
                merged = b_path[: b_path.rfind("/") + 1] + r_path
            path = _remove_dot_segments(merged)
        query = r_query
    return _join(b_scheme, b_auth, path, query, r_frag)


def relativize(iri: str, base: str) -> str | None:
    """A relative reference that resolves against ``base`` back to ``iri``, or None."""
    if iri == base:
        return ""
    b_scheme, b_auth, b_path, b_query, _ = _split(base)
    i_scheme, i_auth, i_path, i_query, i_frag = _split(iri)
    if b_scheme != i_scheme or b_auth != i_auth or b_auth is None:
        return None
    candidates = []
    if i_path == b_path and i_query == b_query and i_frag is not None:
        candidates.append("#" + i_frag)
    if i_path.startswith("/") and b_path.startswith("/"):
        base_dir = b_path[: b_path.rfind("/") + 1]
        rel = posixpath.relpath(i_path, base_dir) if i_path != base_dir else "."
        if i_path.endswith("/") and not rel.endswith("/"):
            rel += "/"
        if rel == ".":
            rel = "./"
        if ":" in rel.split("/", 1)[0]:
            rel = "./" + rel
        if i_query is not None:
            rel += "?" + i_query
        if i_frag is not None:
            rel += "#" + i_frag
        candidates.append(rel)
    for cand in candidates:
        if resolve(base, cand) == iri:
            return cand
    return None
