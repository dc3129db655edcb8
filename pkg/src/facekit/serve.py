"""Local annotation service backing the mask-painting UI.

Plain threaded HTTP, JSON and PNG payloads, no authentication (desk
tool). Masks persist atomically as indexed PNGs in the dataset; each
mask carries an optimistic version token (content digest) so concurrent
editors detect conflicts instead of silently overwriting each other.

API (all under /api/v1):
    GET  /images                   [{id, width, height, has_mask}]
    GET  /images/<id>/image        image PNG bytes
    GET  /images/<id>/mask         mask PNG bytes + X-Mask-Version header
    PUT  /images/<id>/mask         body: mask PNG; header X-Mask-Version
                                   must match the current token ("new"
                                   when no mask exists); 409 on conflict
    GET  /palette                  [{index, name, color}]
    GET  /progress                 {id: labeled-pixel fraction}

The labeled fraction counts non-background pixels; an image with no mask
reports 0.0.
"""

from __future__ import annotations

import io
import json
import re
import threading
from dataclasses import replace
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np
from PIL import Image

from facekit.dataio import DatasetManifest, load_manifest, save_manifest
from facekit.errors import DataError
from facekit.hashing import digest64_hex, file_digest
from facekit.palette import CLASS_COUNT, DEFAULT_PALETTE

API_PREFIX = "/api/v1"
VERSION_HEADER = "X-Mask-Version"
NO_MASK_TOKEN = "new"


class AnnotationService:
    """Thread-safe state behind the HTTP handler."""

    def __init__(self, manifest_path):
        self.manifest_path = Path(manifest_path)
        self.manifest: DatasetManifest = load_manifest(self.manifest_path)
        self._state_lock = threading.Lock()
        self._id_locks: dict[str, threading.Lock] = {}

    def _lock_for(self, entry_id: str) -> threading.Lock:
        with self._state_lock:
            return self._id_locks.setdefault(entry_id, threading.Lock())

    # -- reads ---------------------------------------------------------

    def list_images(self) -> list[dict]:
        out = []
        for e in sorted(self.manifest.entries, key=lambda e: e.id):
            with Image.open(self.manifest.image_path(e)) as img:
                width, height = img.size
            out.append({
                "id": e.id,
                "width": width,
                "height": height,
                "has_mask": e.mask is not None,
            })
        return out

    def image_bytes(self, entry_id: str) -> bytes:
        e = self.manifest.entry(entry_id)
        return self.manifest.image_path(e).read_bytes()

    def mask_bytes(self, entry_id: str) -> tuple[bytes, str] | None:
        e = self.manifest.entry(entry_id)
        path = self.manifest.mask_path(e)
        if path is None or not path.exists():
            return None
        data = path.read_bytes()
        return data, digest64_hex(data)

    def mask_token(self, entry_id: str) -> str:
        current = self.mask_bytes(entry_id)
        return NO_MASK_TOKEN if current is None else current[1]

    def progress(self) -> dict[str, float]:
        out = {}
        for e in sorted(self.manifest.entries, key=lambda e: e.id):
            path = self.manifest.mask_path(e)
            if path is None or not path.exists():
                out[e.id] = 0.0
                continue
            mask = np.asarray(Image.open(path))
            out[e.id] = float((mask != 0).mean())
        return out

    # -- writes --------------------------------------------------------

    def put_mask(self, entry_id: str, png_bytes: bytes, token: str) -> str:
        """Validate, compare tokens, persist atomically; returns new token."""
        e = self.manifest.entry(entry_id)
        self._validate_mask_png(entry_id, png_bytes)
        with self._lock_for(entry_id):
            current = self.mask_token(entry_id)
            if token != current:
                raise StaleToken(current)
            rel = e.mask or f"masks/{entry_id}.png"
            target = self.manifest.root / rel
            target.parent.mkdir(parents=True, exist_ok=True)
            tmp = target.with_name(target.name + ".tmp")
            tmp.write_bytes(png_bytes)
            tmp.replace(target)
            with self._state_lock:
                digests = dict(e.digests)
                digests["mask"] = file_digest(target)
                updated = replace(e, mask=rel, digests=digests)
                self.manifest.entries = [
                    updated if x.id == entry_id else x for x in self.manifest.entries
                ]
                save_manifest(self.manifest, self.manifest_path)
            return digest64_hex(png_bytes)

    def _validate_mask_png(self, entry_id: str, png_bytes: bytes) -> None:
        e = self.manifest.entry(entry_id)
        try:
            img = Image.open(io.BytesIO(png_bytes))
            img.load()
        except OSError as exc:
            raise DataError(f"mask for {entry_id!r} is not a decodable image: {exc}") from exc
        if img.mode != "L":
            raise DataError(
                f"mask for {entry_id!r} must be single-channel 8-bit, got {img.mode!r}"
            )
        arr = np.asarray(img)
        if arr.max(initial=0) >= CLASS_COUNT:
            raise DataError(
                f"mask for {entry_id!r} contains value {int(arr.max())} "
                f"outside 0..{CLASS_COUNT - 1}"
            )
        with Image.open(self.manifest.image_path(e)) as ref:
            if img.size != ref.size:
                raise DataError(
                    f"mask {img.size} does not match image {ref.size} for {entry_id!r}"
                )


class StaleToken(Exception):
    def __init__(self, current: str):
        super().__init__(f"stale version token; current is {current}")
        self.current = current


# ---------------------------------------------------------------------------
# http plumbing


_ROUTES = [
    ("GET", re.compile(r"^/images$"), "list_images"),
    ("GET", re.compile(r"^/images/([^/]+)/image$"), "get_image"),
    ("GET", re.compile(r"^/images/([^/]+)/mask$"), "get_mask"),
    ("PUT", re.compile(r"^/images/([^/]+)/mask$"), "put_mask"),
    ("GET", re.compile(r"^/palette$"), "palette"),
    ("GET", re.compile(r"^/progress$"), "progress"),
]


class _Handler(BaseHTTPRequestHandler):
    service: AnnotationService
    ui_dir: Path | None = None

    # -- helpers -------------------------------------------------------

    def _send(self, status: int, body: bytes, content_type: str, headers=None):
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        for key, value in (headers or {}).items():
            self.send_header(key, value)
        self.end_headers()
        self.wfile.write(body)

    def _json(self, status: int, payload, headers=None):
        self._send(status, json.dumps(payload).encode("utf-8"),
                   "application/json", headers)

    def log_message(self, fmt, *args):  # keep tests quiet
        pass

    def _dispatch(self, method: str):
        if self.path.startswith(API_PREFIX):
            rel = self.path[len(API_PREFIX):]
            for verb, pattern, name in _ROUTES:
                match = pattern.match(rel)
                if match and verb == method:
                    try:
                        getattr(self, f"_handle_{name}")(*match.groups())
                    except DataError as exc:
                        self._json(400, {"error": str(exc)})
                    except StaleToken as exc:
                        self._json(409, {"error": str(exc), "version": exc.current},
                                   {VERSION_HEADER: exc.current})
                    except Exception as exc:  # internal
                        self._json(500, {"error": f"internal error: {exc}"})
                    return
            self._json(404, {"error": f"no route for {method} {self.path}"})
            return
        if method == "GET":
            self._serve_static()
            return
        self._json(404, {"error": f"no route for {method} {self.path}"})

    def do_GET(self):
        self._dispatch("GET")

    def do_PUT(self):
        self._dispatch("PUT")

    # -- api handlers ----------------------------------------------------

    def _handle_list_images(self):
        self._json(200, self.service.list_images())

    def _handle_get_image(self, entry_id):
        try:
            data = self.service.image_bytes(entry_id)
        except DataError as exc:
            self._json(404, {"error": str(exc)})
            return
        self._send(200, data, "image/png")

    def _handle_get_mask(self, entry_id):
        current = self.service.mask_bytes(entry_id)
        if current is None:
            self._json(404, {"error": f"no mask for {entry_id!r}"},
                       {VERSION_HEADER: NO_MASK_TOKEN})
            return
        data, token = current
        self._send(200, data, "image/png", {VERSION_HEADER: token})

    def _handle_put_mask(self, entry_id):
        token = self.headers.get(VERSION_HEADER)
        if token is None:
            self._json(400, {"error": f"missing {VERSION_HEADER} header"})
            return
        length = int(self.headers.get("Content-Length", "0"))
        body = self.rfile.read(length)
        new_token = self.service.put_mask(entry_id, body, token)
        self._json(200, {"version": new_token}, {VERSION_HEADER: new_token})

    def _handle_palette(self):
        self._json(200, DEFAULT_PALETTE.entries())

    def _handle_progress(self):
        self._json(200, self.service.progress())

    # -- static ui -------------------------------------------------------

    _CONTENT_TYPES = {
        ".html": "text/html; charset=utf-8",
        ".js": "text/javascript; charset=utf-8",
        ".css": "text/css; charset=utf-8",
        ".map": "application/json",
        ".png": "image/png",
        ".svg": "image/svg+xml",
    }

    def _serve_static(self):
        if self.ui_dir is None:
            if self.path in ("/", "/index.html"):
                body = (
                    "<html><body><h1>facekit annotation service</h1>"
                    f"<p>API under {API_PREFIX}; no UI bundle configured "
                    "(start with --ui-dir).</p></body></html>"
                ).encode("utf-8")
                self._send(200, body, "text/html; charset=utf-8")
            else:
                self._json(404, {"error": "no UI bundle configured"})
            return
        rel = self.path.lstrip("/") or "index.html"
        base = self.ui_dir.resolve()
        target = (base / rel).resolve()
        if not target.is_relative_to(base) or not target.is_file():
            self._json(404, {"error": f"no such file {self.path}"})
            return
        ctype = self._CONTENT_TYPES.get(target.suffix, "application/octet-stream")
        self._send(200, target.read_bytes(), ctype)


def make_server(manifest_path, host: str = "127.0.0.1", port: int = 0,
                ui_dir=None) -> ThreadingHTTPServer:
    service = AnnotationService(manifest_path)

    class BoundHandler(_Handler):
        pass

    BoundHandler.service = service
    BoundHandler.ui_dir = Path(ui_dir) if ui_dir else None
    try:
        server = ThreadingHTTPServer((host, port), BoundHandler)
    except OSError as exc:
        raise DataError(f"cannot bind {host}:{port}: {exc}") from exc
    server.service = service
    return server


def serve_forever(manifest_path, host: str = "127.0.0.1", port: int = 8377,
                  ui_dir=None) -> None:
    server = make_server(manifest_path, host=host, port=port, ui_dir=ui_dir)
    actual_port = server.server_address[1]
    print(f"annotation service on http://{host}:{actual_port} "
          f"(API {API_PREFIX}, dataset {manifest_path})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
