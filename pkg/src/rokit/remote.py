"""Client side of the service API: upload a local Research Object."""

from __future__ import annotations

from typing import Callable
from urllib.parse import quote

import httpx

from rokit.rdf import RO, serialize_turtle
from rokit.ro.model import ResearchObject, format_timestamp


class PushError(Exception):
    def __init__(self, message: str, exit_code: int):
        super().__init__(message)
        self.exit_code = exit_code


def _client(url: str, token: str | None) -> httpx.Client:
    headers = {"Authorization": f"Bearer {token}"} if token else {}
    return httpx.Client(base_url=url, headers=headers, timeout=30.0)


def _check(response, what: str, ok=(200, 201)) -> None:
    if response.status_code in ok:
        return
    detail = response.text.strip()[:300]
    if response.status_code == 409:
        raise PushError(f"{what}: conflict on the service ({detail})", 65)
    if response.status_code in (400, 401, 403, 404, 405):
        raise PushError(f"{what}: rejected with {response.status_code} ({detail})", 65)
    raise PushError(f"{what}: service answered {response.status_code} ({detail})", 66)


def push(
    ro: ResearchObject,
    name: str,
    url: str,
    token: str | None = None,
    client_factory: Callable[[str, str | None], object] | None = None,
) -> str:
    """Create ``name`` on the service and upload every resource and annotation.

    An existing remote RO of the same name aborts the push; nothing is merged.
    Returns the Location of the new remote RO.
    """
    client = (client_factory or _client)(url, token)
    headers = {"Authorization": f"Bearer {token}"} if token else {}
    try:
        r = client.post(
            "/ROs/",
            headers={**headers, "Slug": name},
            json={"creator": ro.creator.value, "created": format_timestamp(ro.created_at)},
        )
        _check(r, f"creating {name}", ok=(201,))
        location = r.headers.get("location", f"/ROs/{name}/")
        for res in sorted(ro.payload_resources(), key=lambda r: r.ref.value):
            kinds = sorted(k.value for k in res.kinds if k != RO.Resource)
            if ro.is_internal(res.ref):
                ref = ro.key(res.ref)
                r = client.put(
                    f"/ROs/{name}/{quote(ref, safe='/')}",
                    params=[("type", k) for k in kinds],
                    content=res.content or b"",
                    headers=headers,
                )
                _check(r, f"uploading {ref}")
            else:
                r = client.post(f"/ROs/{name}/", json={"aggregate": res.ref.value, "types": kinds}, headers=headers)
                _check(r, f"aggregating {res.ref.value}")
        for ann in sorted(ro.annotations, key=lambda a: a.id.value):
            body = serialize_turtle(ro.annotation_body(ann), base=ro.id.value, scope=ro.id.value)
            payload = {
                "id": ro.key(ann.id),
                "targets": sorted(ro.key(t) or "." for t in ann.targets),
                "body": body,
                "creator": ann.created_by.value,
                "created": format_timestamp(ann.created_at),
            }
            r = client.post(f"/ROs/{name}/", json=payload, headers=headers)
            _check(r, f"annotating {payload['id']}")
    except httpx.HTTPError as exc:
        raise PushError(f"cannot reach {url}: {exc}", 66) from None
    finally:
        close = getattr(client, "close", None)
        if close is not None and client_factory is None:
            close()
    return location
