"""Annotation service tests over a live local HTTP server."""

import io
import json
import threading
import urllib.error
import urllib.request

import numpy as np
import pytest
from PIL import Image

from facekit.serve import API_PREFIX, NO_MASK_TOKEN, VERSION_HEADER, make_server
from facekit.synth import default_config, generate_synthetic


@pytest.fixture()
def server(tmp_path):
    generate_synthetic(default_config(size=24, seed=44), 3, tmp_path)
    # drop one mask so "unannotated" paths are exercised
    manifest_path = tmp_path / "manifest.json"
    doc = json.loads(manifest_path.read_text())
    removed = doc["entries"][2]["mask"]
    (tmp_path / removed).unlink()
    doc["entries"][2]["mask"] = None
    doc["entries"][2]["digests"].pop("mask", None)
    manifest_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")

    srv = make_server(manifest_path, host="127.0.0.1", port=0)
    thread = threading.Thread(target=srv.serve_forever, daemon=True)
    thread.start()
    base = f"http://127.0.0.1:{srv.server_address[1]}"
    yield base, tmp_path
    srv.shutdown()
    srv.server_close()


def get(base, path, expect=200):
    try:
        with urllib.request.urlopen(base + API_PREFIX + path) as resp:
            return resp.status, dict(resp.headers), resp.read()
    except urllib.error.HTTPError as exc:
        return exc.code, dict(exc.headers), exc.read()


def put_mask(base, entry_id, body, token):
    req = urllib.request.Request(
        f"{base}{API_PREFIX}/images/{entry_id}/mask", data=body, method="PUT",
        headers={VERSION_HEADER: token, "Content-Type": "image/png"},
    )
    try:
        with urllib.request.urlopen(req) as resp:
            return resp.status, dict(resp.headers), resp.read()
    except urllib.error.HTTPError as exc:
        return exc.code, dict(exc.headers), exc.read()


def encode_mask(mask: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(mask.astype(np.uint8), mode="L").save(buf, format="PNG")
    return buf.getvalue()


class TestReads:
    def test_palette(self, server):
        base, _ = server
        status, _, body = get(base, "/palette")
        assert status == 200
        palette = json.loads(body)
        assert [p["name"] for p in palette] == [
            "back", "skin", "hair", "eyes", "brows", "nose", "mouth",
        ]
        assert [p["index"] for p in palette] == list(range(7))

    def test_list_images(self, server):
        base, _ = server
        status, _, body = get(base, "/images")
        images = json.loads(body)
        assert status == 200 and len(images) == 3
        assert images[0]["width"] == 24
        assert [i["has_mask"] for i in images] == [True, True, False]

    def test_image_bytes_round_trip(self, server):
        base, root = server
        status, _, body = get(base, "/images/face_0000/image")
        assert status == 200
        assert body == (root / "images" / "face_0000.png").read_bytes()

    def test_mask_carries_version_token(self, server):
        base, root = server
        status, headers, body = get(base, "/images/face_0000/mask")
        assert status == 200
        assert body == (root / "masks" / "face_0000.png").read_bytes()
        assert len(headers[VERSION_HEADER]) == 16

    def test_missing_mask_404_with_new_token(self, server):
        base, _ = server
        status, headers, _ = get(base, "/images/face_0002/mask")
        assert status == 404
        assert headers[VERSION_HEADER] == NO_MASK_TOKEN

    def test_unknown_image(self, server):
        base, _ = server
        status, _, _ = get(base, "/images/nope/image")
        assert status == 404

    def test_progress(self, server):
        base, _ = server
        status, _, body = get(base, "/progress")
        progress = json.loads(body)
        assert status == 200
        assert progress["face_0002"] == 0.0
        assert progress["face_0000"] > 0.3  # synthetic masks are mostly labeled


class TestWrites:
    def test_put_then_get_bitwise(self, server):
        base, _ = server
        mask = np.full((24, 24), 5, dtype=np.uint8)
        body = encode_mask(mask)
        status, headers, resp = put_mask(base, "face_0002", body, NO_MASK_TOKEN)
        assert status == 200
        token = json.loads(resp)["version"]
        status, headers, fetched = get(base, "/images/face_0002/mask")
        assert status == 200
        assert fetched == body
        assert headers[VERSION_HEADER] == token

    def test_stale_token_conflict_leaves_mask_unchanged(self, server):
        base, root = server
        original = (root / "masks" / "face_0000.png").read_bytes()
        new_mask = encode_mask(np.zeros((24, 24), dtype=np.uint8))
        status, headers, body = put_mask(base, "face_0000", new_mask, "0" * 16)
        assert status == 409
        assert "stale" in json.loads(body)["error"]
        assert (root / "masks" / "face_0000.png").read_bytes() == original

    def test_update_with_current_token_succeeds(self, server):
        base, root = server
        _, headers, _ = get(base, "/images/face_0001/mask")
        token = headers[VERSION_HEADER]
        new_mask = encode_mask(np.full((24, 24), 2, dtype=np.uint8))
        status, _, resp = put_mask(base, "face_0001", new_mask, token)
        assert status == 200
        assert (root / "masks" / "face_0001.png").read_bytes() == new_mask
        # manifest digest updated so the dataset still loads cleanly
        from facekit.dataio import load_manifest

        manifest = load_manifest(root / "manifest.json")
        assert manifest.entry("face_0001").mask == "masks/face_0001.png"

    def test_invalid_mask_values_rejected(self, server):
        base, _ = server
        _, headers, _ = get(base, "/images/face_0000/mask")
        bad = encode_mask(np.full((24, 24), 9, dtype=np.uint8))
        status, _, body = put_mask(base, "face_0000", bad, headers[VERSION_HEADER])
        assert status == 400
        assert "outside" in json.loads(body)["error"]

    def test_wrong_dimensions_rejected(self, server):
        base, _ = server
        _, headers, _ = get(base, "/images/face_0000/mask")
        bad = encode_mask(np.zeros((10, 10), dtype=np.uint8))
        status, _, _ = put_mask(base, "face_0000", bad, headers[VERSION_HEADER])
        assert status == 400

    def test_missing_token_header_rejected(self, server):
        base, _ = server
        req = urllib.request.Request(
            f"{base}{API_PREFIX}/images/face_0000/mask",
            data=encode_mask(np.zeros((24, 24), dtype=np.uint8)),
            method="PUT",
        )
        try:
            with urllib.request.urlopen(req) as resp:
                status = resp.status
        except urllib.error.HTTPError as exc:
            status = exc.code
        assert status == 400

    def test_no_partial_writes(self, server):
        base, root = server
        mask = encode_mask(np.full((24, 24), 1, dtype=np.uint8))
        put_mask(base, "face_0002", mask, NO_MASK_TOKEN)
        leftovers = list(root.rglob("*.tmp"))
        assert leftovers == []


class TestStatic:
    def test_placeholder_index_without_ui(self, server):
        base, _ = server
        with urllib.request.urlopen(base + "/") as resp:
            assert resp.status == 200
            assert b"annotation service" in resp.read()
